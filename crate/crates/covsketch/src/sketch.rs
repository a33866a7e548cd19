//! Embedding matrices and sketch ensembles.
//!
//! Sketch vectors are built with a nested structure: an `m x n` Gaussian
//! embedding compresses the ambient space, and each sketch vector is the
//! embedding transpose applied to an independent standard-normal probe. Both
//! generators are bit-reproducible for a fixed seed (ChaCha8 stream, ziggurat
//! normals, column-major fill order).

use nalgebra::{DMatrix, DVector, DVectorView, MatrixView};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{mix, rng_from_seed};

/// Supported embedding families. Only Gaussian is implemented; the enum keeps
/// room for structured families without type changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchFamily {
    Gaussian,
}

impl SketchFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SketchFamily::Gaussian => "gaussian",
        }
    }
}

/// A dense `m x n` embedding whose rows span the measurement subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    m: usize,
    n: usize,
    entries: DMatrix<f64>,
    family: SketchFamily,
}

impl EmbeddingMatrix {
    /// Wraps an explicit matrix, checking shape and finiteness.
    pub fn from_entries(entries: DMatrix<f64>, family: SketchFamily) -> Result<Self> {
        let (m, n) = entries.shape();
        if m == 0 || n == 0 || m > n {
            return Err(Error::InvalidDimensions(format!(
                "need 1 <= m <= n, got m={m} n={n}"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "embedding entries must be finite".into(),
            ));
        }
        Ok(Self {
            m,
            n,
            entries,
            family,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn family(&self) -> SketchFamily {
        self.family
    }
}

/// An embedding together with `l` probes and the derived sketch vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchEnsemble {
    psi: EmbeddingMatrix,
    /// `m x l`; column `i` is probe `w_i`.
    probes: DMatrix<f64>,
    /// `n x l`; column `i` is the sketch vector `psi^T w_i`.
    sketch_vectors: DMatrix<f64>,
}

impl SketchEnsemble {
    pub fn embedding(&self) -> &EmbeddingMatrix {
        &self.psi
    }

    /// Number of sketch vectors `l`.
    pub fn sketch_count(&self) -> usize {
        self.probes.ncols()
    }

    /// All probes as columns of an `m x l` matrix.
    pub fn probes(&self) -> &DMatrix<f64> {
        &self.probes
    }

    /// Probe `w_i`.
    pub fn probe(&self, i: usize) -> DVectorView<'_, f64> {
        self.probes.column(i)
    }

    /// All sketch vectors as columns of an `n x l` matrix.
    pub fn sketch_vectors(&self) -> &DMatrix<f64> {
        &self.sketch_vectors
    }

    /// Sketch vector `a_i = psi^T w_i`.
    pub fn sketch_vector(&self, i: usize) -> DVectorView<'_, f64> {
        self.sketch_vectors.column(i)
    }

    /// A contiguous block of probes, for chunked kernels.
    pub(crate) fn probe_block(&self, start: usize, len: usize) -> MatrixView<'_, f64> {
        self.probes.columns(start, len)
    }

    /// Recomputes `psi^T w_i` from the stored parts; diagnostic for the
    /// derivation invariant.
    pub fn recompute_sketch_vectors(&self) -> DMatrix<f64> {
        self.psi.entries().transpose() * &self.probes
    }

    /// Rebuilds an ensemble from stored embedding and probes (deriving the
    /// sketch vectors), validating shapes.
    pub fn from_parts(psi: EmbeddingMatrix, probes: DMatrix<f64>) -> Result<Self> {
        if probes.nrows() != psi.m() {
            return Err(Error::DimensionMismatch(format!(
                "probes have dimension {}, embedding has m={}",
                probes.nrows(),
                psi.m()
            )));
        }
        if probes.ncols() == 0 {
            return Err(Error::InvalidParameter("need at least one probe".into()));
        }
        let sketch_vectors = psi.entries().transpose() * &probes;
        Ok(Self {
            psi,
            probes,
            sketch_vectors,
        })
    }
}

/// Monte-Carlo lower bound on the restricted isometry constant of an
/// embedding at sparsity `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RipDiagnostic {
    pub k: usize,
    pub trials: usize,
    /// `max |  |psi z|^2 - 1 |` over random k-sparse unit vectors `z`; a
    /// certified lower bound on the isometry constant, never an upper bound.
    pub delta_lower: f64,
}

/// Generates an `m x n` embedding with iid `Normal(0, 1/m)` entries,
/// column-major fill order. Deterministic for a fixed seed.
pub fn gen_embedding(m: usize, n: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if m == 0 || n == 0 || m > n {
        return Err(Error::InvalidDimensions(format!(
            "need 1 <= m <= n, got m={m} n={n}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let mut entries = DMatrix::<f64>::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            let g: f64 = rng.sample(StandardNormal);
            entries[(i, j)] = scale * g;
        }
    }
    EmbeddingMatrix::from_entries(entries, SketchFamily::Gaussian)
}

/// Draws `l` iid standard-normal probes in the embedded space and derives the
/// sketch vectors. Probes are filled column-major in probe order.
pub fn gen_ensemble(psi: EmbeddingMatrix, l: usize, seed: u64) -> Result<SketchEnsemble> {
    if l == 0 {
        return Err(Error::InvalidParameter("need l >= 1 probes".into()));
    }
    let mut rng = rng_from_seed(seed);
    let m = psi.m();
    let mut probes = DMatrix::<f64>::zeros(m, l);
    for j in 0..l {
        for i in 0..m {
            probes[(i, j)] = rng.sample(StandardNormal);
        }
    }
    SketchEnsemble::from_parts(psi, probes)
}

/// Samples random `k`-sparse unit vectors and records the worst quadratic
/// deviation `| |psi z|^2 - 1 |`. Each trial is independently seeded from
/// `(seed, trial)`, so the result does not depend on scheduling.
pub fn rip_diagnostic(
    psi: &EmbeddingMatrix,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<RipDiagnostic> {
    if k == 0 || k > psi.n() {
        return Err(Error::InvalidDimensions(format!(
            "sparsity k={k} out of range for n={}",
            psi.n()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("need trials >= 1".into()));
    }
    let n = psi.n();
    let chunk_maxima = par::map_chunks(trials, par::CHUNK, |start, len| {
        let mut worst = 0.0f64;
        for t in start..start + len {
            let mut rng = rng_from_seed(mix(seed, t as u64));
            // Random support by partial Fisher-Yates, then Gaussian values
            // normalized to a unit vector.
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = rng.random_range(i..n);
                idx.swap(i, j);
            }
            let mut z = DVector::<f64>::zeros(n);
            for &i in &idx[..k] {
                z[i] = rng.sample(StandardNormal);
            }
            let norm = z.norm();
            if norm == 0.0 {
                continue;
            }
            z /= norm;
            let image = psi.entries() * &z;
            let dev = (image.norm_squared() - 1.0).abs();
            worst = worst.max(dev);
        }
        worst
    });
    let delta_lower = chunk_maxima.into_iter().fold(0.0f64, f64::max);
    Ok(RipDiagnostic {
        k,
        trials,
        delta_lower,
    })
}

/// Sequential twin of [`rip_diagnostic`]; identical output.
pub fn rip_diagnostic_seq(
    psi: &EmbeddingMatrix,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<RipDiagnostic> {
    if k == 0 || k > psi.n() {
        return Err(Error::InvalidDimensions(format!(
            "sparsity k={k} out of range for n={}",
            psi.n()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("need trials >= 1".into()));
    }
    let n = psi.n();
    let chunk_maxima = par::map_chunks_seq(trials, par::CHUNK, |start, len| {
        let mut worst = 0.0f64;
        for t in start..start + len {
            let mut rng = rng_from_seed(mix(seed, t as u64));
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = rng.random_range(i..n);
                idx.swap(i, j);
            }
            let mut z = DVector::<f64>::zeros(n);
            for &i in &idx[..k] {
                z[i] = rng.sample(StandardNormal);
            }
            let norm = z.norm();
            if norm == 0.0 {
                continue;
            }
            z /= norm;
            let image = psi.entries() * &z;
            let dev = (image.norm_squared() - 1.0).abs();
            worst = worst.max(dev);
        }
        worst
    });
    let delta_lower = chunk_maxima.into_iter().fold(0.0f64, f64::max);
    Ok(RipDiagnostic {
        k,
        trials,
        delta_lower,
    })
}

/// Default embedding dimension `ceil(2 k (1 + ln(n / k)))` for sparsity `k`
/// in ambient dimension `n`. Natural log.
pub fn default_embedding_dim(n: usize, k: usize) -> Result<usize> {
    if k == 0 || k > n {
        return Err(Error::InvalidDimensions(format!(
            "need 1 <= k <= n, got n={n} k={k}"
        )));
    }
    let m = (2.0 * k as f64 * (1.0 + (n as f64 / k as f64).ln())).ceil();
    Ok(m as usize)
}

/// Default sketch count `3 r m` for rank `r` and embedding dimension `m`.
pub fn default_sketch_count(r: usize, m: usize) -> Result<usize> {
    if r == 0 || m == 0 {
        return Err(Error::InvalidParameter("need r >= 1 and m >= 1".into()));
    }
    Ok(3 * r * m)
}
