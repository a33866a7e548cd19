//! Measurement formation and the rank-one sketch operator.
//!
//! Each measurement component is a quadratic form of a probe against the
//! embedded covariance. The forward map `b -> [w_i^T b w_i]` and its adjoint
//! `y -> sum_i y_i w_i w_i^T` are the only operator accesses the stage-1
//! solver needs, so both are kept matrix-free and chunked: fixed chunk
//! widths and in-order combination keep results identical whether or not
//! the work runs on the rayon pool.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{SampleBatch, TargetCovariance};
use crate::par;
use crate::sketch::SketchEnsemble;

/// How samples are assigned to sketch indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Assignment {
    /// Every sample contributes to every sketch; the averaging count equals
    /// the batch size. Matches a fixed sample budget shared across sketches.
    ReuseAll,
    /// Disjoint contiguous blocks of equal size `count / l`; any remainder
    /// samples at the end of the batch are dropped. Matches the streaming
    /// model where each sample is sketched exactly once.
    Partition,
    /// Explicit map from sample index to sketch index. Every sketch must
    /// receive at least one sample; the recorded averaging count is the
    /// minimum per-sketch count.
    Explicit(Vec<usize>),
}

impl Assignment {
    pub fn name(&self) -> &'static str {
        match self {
            Assignment::ReuseAll => "reuse-all",
            Assignment::Partition => "partition",
            Assignment::Explicit(_) => "explicit",
        }
    }
}

/// Sketch measurements with their noise budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    /// One entry per sketch vector.
    pub y: DVector<f64>,
    /// Bound on the l2 norm of the measurement error.
    pub epsilon: f64,
    /// Averaging count per sketch.
    pub t_per_sketch: usize,
}

impl Measurements {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.len() == 0
    }
}

fn check_batch(batch: &SampleBatch, ensemble: &SketchEnsemble) -> Result<()> {
    if batch.dim() != ensemble.embedding().n() {
        return Err(Error::DimensionMismatch(format!(
            "samples have dimension {}, ensemble expects {}",
            batch.dim(),
            ensemble.embedding().n()
        )));
    }
    Ok(())
}

/// Averaged squared inner products of samples against their assigned sketch
/// vectors: `y[i] = mean over assigned t of <x_t, a_i>^2`.
pub fn sketch_samples(
    batch: &SampleBatch,
    ensemble: &SketchEnsemble,
    assignment: &Assignment,
) -> Result<Measurements> {
    sketch_samples_impl(batch, ensemble, assignment, false)
}

/// Sequential twin of [`sketch_samples`]; identical output.
pub fn sketch_samples_seq(
    batch: &SampleBatch,
    ensemble: &SketchEnsemble,
    assignment: &Assignment,
) -> Result<Measurements> {
    sketch_samples_impl(batch, ensemble, assignment, true)
}

fn sketch_samples_impl(
    batch: &SampleBatch,
    ensemble: &SketchEnsemble,
    assignment: &Assignment,
    force_seq: bool,
) -> Result<Measurements> {
    check_batch(batch, ensemble)?;
    let q = batch.count();
    let l = ensemble.sketch_count();

    let (y, t) = match assignment {
        Assignment::ReuseAll => {
            // Partial sums of squares per sketch over fixed row chunks of the
            // sample matrix, combined in chunk order.
            const ROW_CHUNK: usize = 256;
            let kernel = |start: usize, len: usize| -> Vec<f64> {
                let rows = batch.data().rows(start, len);
                let products = rows * ensemble.sketch_vectors();
                (0..l)
                    .map(|i| products.column(i).norm_squared())
                    .collect()
            };
            let partials = if force_seq {
                par::map_chunks_seq(q, ROW_CHUNK, kernel)
            } else {
                par::map_chunks(q, ROW_CHUNK, kernel)
            };
            let mut sums = vec![0.0f64; l];
            for part in &partials {
                for (acc, v) in sums.iter_mut().zip(part) {
                    *acc += v;
                }
            }
            let y = DVector::from_iterator(l, sums.into_iter().map(|s| s / q as f64));
            (y, q)
        }
        Assignment::Partition => {
            let t = q / l;
            if t == 0 {
                return Err(Error::EmptySketch(q));
            }
            let kernel = |start: usize, len: usize| -> Vec<f64> {
                (start..start + len)
                    .map(|i| {
                        let rows = batch.data().rows(i * t, t);
                        let products = rows * ensemble.sketch_vector(i);
                        products.norm_squared() / t as f64
                    })
                    .collect()
            };
            let chunks = if force_seq {
                par::map_chunks_seq(l, par::CHUNK, kernel)
            } else {
                par::map_chunks(l, par::CHUNK, kernel)
            };
            let y = DVector::from_iterator(l, chunks.into_iter().flatten());
            (y, t)
        }
        Assignment::Explicit(map) => {
            if map.len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "assignment maps {} samples, batch has {q}",
                    map.len()
                )));
            }
            if let Some(&bad) = map.iter().find(|&&i| i >= l) {
                return Err(Error::DimensionMismatch(format!(
                    "assignment targets sketch {bad}, ensemble has {l}"
                )));
            }
            let mut sums = vec![0.0f64; l];
            let mut counts = vec![0usize; l];
            for (tix, &i) in map.iter().enumerate() {
                let dot = batch.data().row(tix).transpose().dot(&ensemble.sketch_vector(i));
                sums[i] += dot * dot;
                counts[i] += 1;
            }
            if let Some(i) = counts.iter().position(|&c| c == 0) {
                return Err(Error::EmptySketch(i));
            }
            let y = DVector::from_iterator(
                l,
                sums.iter().zip(&counts).map(|(s, &c)| s / c as f64),
            );
            (y, counts.into_iter().min().unwrap_or(0))
        }
    };

    Ok(Measurements {
        y,
        epsilon: 0.0,
        t_per_sketch: t,
    })
}

/// Forward sketch operator: component `i` is the quadratic form
/// `w_i^T b w_i`. Linear in `b`.
pub fn probe_quadratic(b: &DMatrix<f64>, ensemble: &SketchEnsemble) -> Result<DVector<f64>> {
    probe_quadratic_impl(b, ensemble, false)
}

/// Sequential twin of [`probe_quadratic`]; identical output.
pub fn probe_quadratic_seq(b: &DMatrix<f64>, ensemble: &SketchEnsemble) -> Result<DVector<f64>> {
    probe_quadratic_impl(b, ensemble, true)
}

fn probe_quadratic_impl(
    b: &DMatrix<f64>,
    ensemble: &SketchEnsemble,
    force_seq: bool,
) -> Result<DVector<f64>> {
    let m = ensemble.embedding().m();
    if b.nrows() != m || b.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "operator input is {}x{}, expected {m}x{m}",
            b.nrows(),
            b.ncols()
        )));
    }
    let l = ensemble.sketch_count();
    let kernel = |start: usize, len: usize| -> Vec<f64> {
        let block = ensemble.probe_block(start, len);
        let image = b * block;
        (0..len)
            .map(|j| block.column(j).dot(&image.column(j)))
            .collect()
    };
    let chunks = if force_seq {
        par::map_chunks_seq(l, par::CHUNK, kernel)
    } else {
        par::map_chunks(l, par::CHUNK, kernel)
    };
    Ok(DVector::from_iterator(l, chunks.into_iter().flatten()))
}

/// Adjoint of the sketch operator: `sum_i y[i] w_i w_i^T`, a symmetric
/// `m x m` matrix.
pub fn probe_quadratic_adjoint(
    y: &DVector<f64>,
    ensemble: &SketchEnsemble,
) -> Result<DMatrix<f64>> {
    probe_quadratic_adjoint_impl(y, ensemble, false)
}

/// Sequential twin of [`probe_quadratic_adjoint`]; identical output.
pub fn probe_quadratic_adjoint_seq(
    y: &DVector<f64>,
    ensemble: &SketchEnsemble,
) -> Result<DMatrix<f64>> {
    probe_quadratic_adjoint_impl(y, ensemble, true)
}

fn probe_quadratic_adjoint_impl(
    y: &DVector<f64>,
    ensemble: &SketchEnsemble,
    force_seq: bool,
) -> Result<DMatrix<f64>> {
    let l = ensemble.sketch_count();
    if y.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "adjoint input has length {}, ensemble has {l} sketches",
            y.len()
        )));
    }
    let m = ensemble.embedding().m();
    let kernel = |start: usize, len: usize| -> DMatrix<f64> {
        let block = ensemble.probe_block(start, len);
        let mut scaled = block.clone_owned();
        for j in 0..len {
            let w = y[start + j];
            scaled.column_mut(j).scale_mut(w);
        }
        scaled * block.transpose()
    };
    let partials = if force_seq {
        par::map_chunks_seq(l, par::CHUNK, kernel)
    } else {
        par::map_chunks(l, par::CHUNK, kernel)
    };
    let mut out = DMatrix::<f64>::zeros(m, m);
    for p in &partials {
        out += p;
    }
    Ok(out)
}

/// Noise-free measurements of a target covariance, computed in factored form
/// (the embedded factor, never the dense covariance).
pub fn exact_measure(cov: &TargetCovariance, ensemble: &SketchEnsemble) -> Result<Measurements> {
    if cov.dim() != ensemble.embedding().n() {
        return Err(Error::DimensionMismatch(format!(
            "target has dimension {}, ensemble expects {}",
            cov.dim(),
            ensemble.embedding().n()
        )));
    }
    let embedded = ensemble.embedding().entries() * cov.factor(); // m x r
    let projected = embedded.transpose() * ensemble.probes(); // r x l
    let l = ensemble.sketch_count();
    let y = DVector::from_iterator(l, (0..l).map(|i| projected.column(i).norm_squared()));
    Ok(Measurements {
        y,
        epsilon: 0.0,
        t_per_sketch: 0,
    })
}

/// RMS measurement noise `sqrt((2/t) sum_i (a_i^T cov a_i)^2)` for Gaussian
/// data averaged over `t` samples per sketch. Usable as an oracle noise
/// budget.
pub fn noise_bound(cov: &TargetCovariance, ensemble: &SketchEnsemble, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidParameter("need t >= 1".into()));
    }
    let exact = exact_measure(cov, ensemble)?;
    Ok((2.0 / t as f64).sqrt() * exact.y.norm())
}

/// Noise budget heuristic `2 r k / sqrt(t)`.
pub fn heuristic_epsilon(r: usize, k: usize, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidParameter("need t >= 1".into()));
    }
    Ok(2.0 * r as f64 * k as f64 / (t as f64).sqrt())
}
