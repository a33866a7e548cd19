//! Stage 1: trace minimization over the PSD cone inside the measurement
//! residual ball, plus the spectral projections it needs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::measure::{probe_quadratic, probe_quadratic_adjoint, Measurements};
use crate::sketch::SketchEnsemble;
use crate::solver::{
    order_spectral_columns, solve_split, spectral_norm_estimate, SolverConfig, SplitProblem,
};

/// Output of the trace-minimization stage.
#[derive(Debug, Clone)]
pub struct PsdEstimate {
    /// The recovered `m x m` positive semidefinite matrix.
    pub b_hat: DMatrix<f64>,
    /// Top eigenvectors of `b_hat`, orthonormal columns.
    pub u_hat: DMatrix<f64>,
    /// Full spectrum of `b_hat`, descending; reported so callers can audit
    /// the rank choice.
    pub eigenvalues: DVector<f64>,
    /// Achieved measurement residual `|W(b_hat) - y|`.
    pub residual: f64,
    /// Outer iterations taken by the splitting solver.
    pub iterations: usize,
    /// False when the iteration cap was reached with residuals above
    /// tolerance; the estimate is still returned.
    pub converged: bool,
}

/// Frobenius-nearest positive semidefinite matrix: symmetrize, then clip
/// negative eigenvalues to zero.
pub fn project_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut recomposed = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 0.0 {
            let v = eig.eigenvectors.column(i);
            recomposed += lambda * &v * v.transpose();
        }
    }
    recomposed
}

/// Projection of `v` onto the l2 ball of the given radius around `center`.
pub fn project_l2_ball(v: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let diff = v - center;
    let dist = diff.norm();
    if dist <= radius || dist == 0.0 {
        v.clone()
    } else {
        center + diff * (radius / dist)
    }
}

/// Unit-norm eigenvectors of the `r` algebraically largest eigenvalues of a
/// symmetric matrix, with the crate's deterministic ordering and sign rule.
pub fn top_eigenvectors(b: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sorted_symmetric_eigen(b)?;
    if r > vals.len() {
        return Err(Error::InvalidDimensions(format!(
            "requested {r} eigenvectors of a {}x{} matrix",
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(vecs.columns(0, r).into_owned())
}

/// Symmetric eigendecomposition with eigenvalues sorted descending and the
/// deterministic column convention applied.
pub(crate) fn sorted_symmetric_eigen(b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if b.nrows() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    let sym = (b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    Ok(order_spectral_columns(&vals, &eig.eigenvectors))
}

/// Solves `min trace(b)` over PSD `b` subject to `|W(b) - y| <= epsilon`,
/// then extracts the top `rank` eigenvectors.
///
/// A zero noise budget is bumped to `1e-9 |y|` internally; an `epsilon`
/// at or above `|y|` short-circuits to the zero matrix (feasible with the
/// minimum possible trace). Non-convergence is reported through the
/// `converged` flag, never as an error.
pub fn solve_trace_min(
    measurements: &Measurements,
    ensemble: &SketchEnsemble,
    epsilon: f64,
    rank: usize,
    cfg: &SolverConfig,
) -> Result<PsdEstimate> {
    cfg.validate()?;
    let m = ensemble.embedding().m();
    let l = ensemble.sketch_count();
    if measurements.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "measurements have length {}, ensemble has {l} sketches",
            measurements.len()
        )));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter("epsilon must be >= 0".into()));
    }
    if rank == 0 || rank > m {
        return Err(Error::InvalidDimensions(format!(
            "rank {rank} out of range for m={m}"
        )));
    }

    let y = &measurements.y;
    let y_norm = y.norm();
    if epsilon >= y_norm {
        // Zero is feasible, and trace 0 on the PSD cone forces b = 0.
        return finish_estimate(DMatrix::zeros(m, m), rank, y_norm, 0, true);
    }

    let op_norm = {
        let gram = |b: &DMatrix<f64>| {
            let fwd = probe_quadratic(b, ensemble).expect("shape enforced above");
            probe_quadratic_adjoint(&fwd, ensemble).expect("shape enforced above")
        };
        spectral_norm_estimate(gram, m, m, 30)
    };
    let op_scale = if op_norm > 0.0 { op_norm } else { 1.0 };

    let eps_eff = epsilon.max(1e-9 * y_norm);
    let data = DMatrix::from_iterator(l, 1, y.iter().map(|v| v / y_norm));
    let radius = eps_eff / y_norm;
    let feas_stop = (eps_eff * (1.0 + cfg.tol_rel) + cfg.tol_abs) / y_norm;
    let x_scale = y_norm / op_scale;

    let problem = SplitProblem {
        apply: Box::new(move |b: &DMatrix<f64>| {
            let v = probe_quadratic(b, ensemble).expect("shape enforced above");
            DMatrix::from_iterator(l, 1, v.iter().map(|x| x / op_scale))
        }),
        adjoint: Box::new(move |v: &DMatrix<f64>| {
            let vec = DVector::from_column_slice(v.as_slice());
            let adj = probe_quadratic_adjoint(&vec, ensemble).expect("shape enforced above");
            adj / op_scale
        }),
        prox: Box::new(|mut v: DMatrix<f64>, tau: f64| {
            // prox of trace(.) restricted to the PSD cone: shift the diagonal
            // down by tau, then project.
            for i in 0..v.nrows() {
                v[(i, i)] -= tau;
            }
            project_psd(&v)
        }),
        objective: Box::new(|z: &DMatrix<f64>| z.trace()),
        data,
        radius,
        x_rows: m,
        x_cols: m,
        obj_scale: x_scale,
        feas_stop,
    };

    let outcome = solve_split(&problem, cfg)?;
    finish_estimate(
        outcome.z * x_scale,
        rank,
        outcome.residual * y_norm,
        outcome.iterations,
        outcome.converged,
    )
}

fn finish_estimate(
    b_hat: DMatrix<f64>,
    rank: usize,
    residual: f64,
    iterations: usize,
    converged: bool,
) -> Result<PsdEstimate> {
    let (vals, vecs) = sorted_symmetric_eigen(&b_hat)?;
    let u_hat = vecs.columns(0, rank).into_owned();
    Ok(PsdEstimate {
        b_hat,
        u_hat,
        eigenvalues: DVector::from_vec(vals),
        residual,
        iterations,
        converged,
    })
}
