//! Shared operator-splitting machinery for the two recovery stages.
//!
//! Both stages minimize a prox-friendly convex objective subject to a norm
//! ball on the residual of a linear operator:
//!
//! ```text
//! minimize g(x)  subject to  |A(x) - d| <= radius
//! ```
//!
//! The alternating-direction scheme splits into a least-squares update in
//! `x` (solved matrix-free by conjugate gradients on `I + A* A`), a prox
//! step for `g`, a ball projection for the residual copy, and scaled dual
//! updates with over-relaxation. Problems are normalized internally: the
//! operator is divided by a power-method estimate of its norm and the data
//! by its own norm, which keeps one penalty parameter workable across
//! scales. Stage wrappers undo the scaling on the way out.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Operator-splitting solver parameters, shared by both stages.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Penalty parameter of the augmented Lagrangian.
    pub rho: f64,
    /// Iteration cap; reaching it flags the result as unconverged.
    pub max_iter: usize,
    /// Absolute stopping tolerance.
    pub tol_abs: f64,
    /// Relative stopping tolerance.
    pub tol_rel: f64,
    /// Over-relaxation factor in [1, 1.9].
    pub over_relaxation: f64,
    /// Optional iteration-trace CSV (`iter,primal_res,dual_res,trace_obj`).
    pub trace_path: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iter: 5000,
            tol_abs: 1e-6,
            tol_rel: 1e-4,
            over_relaxation: 1.6,
            trace_path: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParameter("rho must be > 0".into()));
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be > 0".into()));
        }
        if !(1.0..=1.9).contains(&self.over_relaxation) {
            return Err(Error::InvalidParameter(
                "over_relaxation must lie in [1, 1.9]".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// A normalized splitting problem. All quantities are in solver-internal
/// units; `obj_scale` converts the objective back for the trace file.
pub(crate) struct SplitProblem<'a> {
    pub apply: Box<dyn Fn(&DMatrix<f64>) -> DMatrix<f64> + 'a>,
    pub adjoint: Box<dyn Fn(&DMatrix<f64>) -> DMatrix<f64> + 'a>,
    /// Prox of the objective `g` with parameter `tau`.
    pub prox: Box<dyn Fn(DMatrix<f64>, f64) -> DMatrix<f64> + 'a>,
    pub objective: Box<dyn Fn(&DMatrix<f64>) -> f64 + 'a>,
    pub data: DMatrix<f64>,
    pub radius: f64,
    pub x_rows: usize,
    pub x_cols: usize,
    pub obj_scale: f64,
    /// Feasibility target on the prox iterate, in solver units; convergence
    /// additionally requires `|A(z) - d| <= feas_stop`.
    pub feas_stop: f64,
}

pub(crate) struct SplitOutcome {
    /// The prox-side iterate: exactly feasible for the objective's
    /// constraint set (PSD cone, row-sparsity pattern).
    pub z: DMatrix<f64>,
    /// `|A(z) - d|` in solver units at exit.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn solve_split(problem: &SplitProblem<'_>, cfg: &SolverConfig) -> Result<SplitOutcome> {
    cfg.validate()?;
    let apply = &problem.apply;
    let adjoint = &problem.adjoint;

    let dim_x = (problem.x_rows * problem.x_cols) as f64;
    let dim_d = (problem.data.nrows() * problem.data.ncols()) as f64;
    let alpha = cfg.over_relaxation;
    let tau = 1.0 / cfg.rho;

    let mut x = DMatrix::<f64>::zeros(problem.x_rows, problem.x_cols);
    let mut z = x.clone();
    let mut r = DMatrix::<f64>::zeros(problem.data.nrows(), problem.data.ncols());
    let mut u1 = x.clone();
    let mut u2 = r.clone();

    let mut trace = problem_trace_buffer(cfg);
    let mut iterations = 0;
    let mut converged = false;

    for iter in 1..=cfg.max_iter {
        iterations = iter;

        // x-update: (I + A* A) x = (z - u1) + A*(d + r - u2), warm-started.
        let rhs = (&z - &u1) + adjoint(&(&problem.data + &r - &u2));
        x = conjugate_gradient(|v| v + adjoint(&apply(v)), &rhs, x, 1e-9, 50).0;
        let ax = apply(&x);

        // Over-relaxed mixing of the new x against the previous copies.
        let xhat = alpha * &x + (1.0 - alpha) * &z;
        let axhat = alpha * &ax + (1.0 - alpha) * (&r + &problem.data);

        let z_old = std::mem::replace(&mut z, DMatrix::zeros(0, 0));
        z = (problem.prox)(&xhat + &u1, tau);
        let r_old = std::mem::replace(&mut r, DMatrix::zeros(0, 0));
        r = project_ball(&(&axhat - &problem.data + &u2), problem.radius);

        u1 += &xhat - &z;
        u2 += &axhat - &problem.data - &r;

        let pri = ((&x - &z).norm_squared() + (&ax - &problem.data - &r).norm_squared()).sqrt();
        let dual = cfg.rho * ((&z_old - &z) + adjoint(&(&r_old - &r))).norm();

        let eps_pri = (dim_x + dim_d).sqrt() * cfg.tol_abs
            + cfg.tol_rel
                * (x.norm_squared() + ax.norm_squared())
                    .sqrt()
                    .max((z.norm_squared() + (&r + &problem.data).norm_squared()).sqrt());
        let eps_dual =
            dim_x.sqrt() * cfg.tol_abs + cfg.tol_rel * cfg.rho * (&u1 + adjoint(&u2)).norm();

        if let Some(buf) = trace.as_mut() {
            let _ = writeln!(
                buf,
                "{iter},{pri},{dual},{}",
                problem.obj_scale * (problem.objective)(&z)
            );
        }

        if pri <= eps_pri && dual <= eps_dual {
            let feas = (apply(&z) - &problem.data).norm();
            if feas <= problem.feas_stop {
                converged = true;
                break;
            }
        }
    }

    if let (Some(buf), Some(path)) = (trace, cfg.trace_path.as_ref()) {
        std::fs::write(path, buf)?;
    }

    let residual = (apply(&z) - &problem.data).norm();
    Ok(SplitOutcome {
        z,
        residual,
        iterations,
        converged,
    })
}

fn problem_trace_buffer(cfg: &SolverConfig) -> Option<String> {
    cfg.trace_path
        .as_ref()
        .map(|_| String::from("iter,primal_res,dual_res,trace_obj\n"))
}

/// Conjugate gradients for `op(x) = b` with `op` self-adjoint positive
/// definite under the Frobenius inner product. Returns the iterate and the
/// number of iterations taken.
pub(crate) fn conjugate_gradient<F>(
    op: F,
    b: &DMatrix<f64>,
    x0: DMatrix<f64>,
    tol_rel: f64,
    max_iter: usize,
) -> (DMatrix<f64>, usize)
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return (DMatrix::zeros(b.nrows(), b.ncols()), 0);
    }
    let mut x = x0;
    let mut resid = b - op(&x);
    let mut p = resid.clone();
    let mut rs = resid.norm_squared();
    for iter in 0..max_iter {
        if rs.sqrt() <= tol_rel * b_norm {
            return (x, iter);
        }
        let ap = op(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            break;
        }
        let step = rs / pap;
        x += step * &p;
        resid -= step * ap;
        let rs_next = resid.norm_squared();
        p = &resid + (rs_next / rs) * p;
        rs = rs_next;
    }
    (x, max_iter)
}

/// Projection onto the Frobenius ball of the given radius centered at zero.
pub(crate) fn project_ball(v: &DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    let norm = v.norm();
    if norm <= radius || norm == 0.0 {
        v.clone()
    } else {
        v * (radius / norm)
    }
}

/// Power-method estimate of the largest eigenvalue of a self-adjoint PSD
/// operator on `rows x cols` matrices. Deterministic (seeded start vector).
pub(crate) fn spectral_norm_estimate<F>(gram: F, rows: usize, cols: usize, iters: usize) -> f64
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = rng_from_seed(0x706f_7765_726d); // "powerm"
    let mut v = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = v.norm();
    if n == 0.0 {
        return 0.0;
    }
    v /= n;
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = gram(&v);
        lambda = w.norm();
        if lambda == 0.0 {
            return 0.0;
        }
        v = w / lambda;
    }
    lambda.sqrt()
}

/// Sorts spectral columns by value (descending). Among bitwise-equal values
/// the column whose first nonzero component has the smaller index comes
/// first; each column's sign is fixed so its largest-magnitude component is
/// positive (first occurrence wins a magnitude tie).
pub(crate) fn order_spectral_columns(
    values: &[f64],
    vectors: &DMatrix<f64>,
) -> (Vec<f64>, DMatrix<f64>) {
    let n = vectors.nrows();
    let cols = vectors.ncols();
    debug_assert_eq!(values.len(), cols);

    let first_nonzero = |c: usize| -> usize {
        (0..n)
            .find(|&i| vectors[(i, c)] != 0.0)
            .unwrap_or(n)
    };
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| first_nonzero(a).cmp(&first_nonzero(b)))
    });

    let mut out_vals = Vec::with_capacity(cols);
    let mut out_vecs = DMatrix::<f64>::zeros(n, cols);
    for (dst, &src) in order.iter().enumerate() {
        out_vals.push(values[src]);
        let col = vectors.column(src);
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for i in 0..n {
            let a = col[i].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        let flip = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out_vecs[(i, dst)] = flip * col[i];
        }
    }
    (out_vals, out_vecs)
}
