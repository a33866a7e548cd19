//! Synthetic covariance targets and Gaussian sample generation.
//!
//! A target covariance is kept in factored form: an `n x r` factor with
//! exactly `k` nonzero rows, so the implied covariance (factor times its
//! transpose) is positive semidefinite, rank at most `r`, and supported on a
//! `k x k` principal block. Samples are drawn directly through the factor,
//! which is exact for rank-deficient covariances and costs `O(n r)` per
//! sample instead of an `n x n` Cholesky factorization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Ground-truth covariance in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCovariance {
    n: usize,
    r: usize,
    k: usize,
    /// `n x r` factor; only the rows in `support` may be nonzero.
    factor: DMatrix<f64>,
    /// Sorted indices of the rows allowed to be nonzero, `|support| = k`.
    support: Vec<usize>,
}

impl TargetCovariance {
    /// Builds a target from an explicit factor and support, validating the
    /// type invariants (exact zeros off support, `r <= k <= n`).
    pub fn from_parts(factor: DMatrix<f64>, support: Vec<usize>) -> Result<Self> {
        let n = factor.nrows();
        let r = factor.ncols();
        let k = support.len();
        if !(1 <= r && r <= k && k <= n) {
            return Err(Error::InvalidDimensions(format!(
                "need 1 <= r <= k <= n, got n={n} k={k} r={r}"
            )));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k || sorted.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidDimensions(
                "support must be k distinct indices below n".into(),
            ));
        }
        let mut on_support = vec![false; n];
        for &i in &sorted {
            on_support[i] = true;
        }
        for i in 0..n {
            if !on_support[i] && (0..r).any(|j| factor[(i, j)] != 0.0) {
                return Err(Error::InvalidDimensions(format!(
                    "row {i} is outside the support but nonzero"
                )));
            }
        }
        Ok(Self {
            n,
            r,
            k,
            factor,
            support: sorted,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn row_sparsity(&self) -> usize {
        self.k
    }

    /// The `n x r` factor.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Sorted support indices.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Materializes the implied covariance densely. Intended for small
    /// instances and test oracles; everything else should stay factored.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Frobenius norm of the implied covariance, computed in factored form.
    pub fn frobenius_norm(&self) -> f64 {
        (self.factor.transpose() * &self.factor).norm()
    }
}

/// A batch of samples, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// `count x n`; row `t` is the sample `x_t`.
    data: DMatrix<f64>,
}

impl SampleBatch {
    pub fn from_rows(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    pub fn count(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn sample(&self, t: usize) -> DVector<f64> {
        self.data.row(t).transpose()
    }

    /// Empirical covariance `(1/count) sum x x^T`, densely. Test oracle.
    pub fn empirical_covariance(&self) -> DMatrix<f64> {
        let q = self.count() as f64;
        (self.data.transpose() * &self.data) / q
    }
}

/// Generates a synthetic target: a `k x r` standard-Gaussian block, each
/// column scaled by an independent Uniform[0,1] draw, placed on a uniformly
/// random `k`-subset of the `n` rows.
///
/// Deterministic for a fixed seed. Draw order: Gaussian block column-major,
/// then the `r` column scales, then the support subset via a partial
/// Fisher-Yates shuffle.
pub fn gen_target(n: usize, k: usize, r: usize, seed: u64) -> Result<TargetCovariance> {
    if !(1 <= r && r <= k && k <= n) {
        return Err(Error::InvalidDimensions(format!(
            "need 1 <= r <= k <= n, got n={n} k={k} r={r}"
        )));
    }
    let mut rng = rng_from_seed(seed);

    let mut block = DMatrix::<f64>::zeros(k, r);
    for j in 0..r {
        for i in 0..k {
            block[(i, j)] = rng.sample(StandardNormal);
        }
    }
    for j in 0..r {
        let scale: f64 = rng.random();
        for i in 0..k {
            block[(i, j)] *= scale;
        }
    }

    // Uniform k-subset of 0..n by partial Fisher-Yates.
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut support: Vec<usize> = idx[..k].to_vec();
    support.sort_unstable();

    let mut factor = DMatrix::<f64>::zeros(n, r);
    for (bi, &row) in support.iter().enumerate() {
        for j in 0..r {
            factor[(row, j)] = block[(bi, j)];
        }
    }
    TargetCovariance::from_parts(factor, support)
}

/// Draws `q` independent samples from `Normal(0, cov)` as `x = U g` with
/// `g ~ Normal(0, I_r)`; `g` vectors are drawn column-major in sample order.
pub fn sample_gaussian(cov: &TargetCovariance, q: usize, seed: u64) -> Result<SampleBatch> {
    if q == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let r = cov.rank();
    let mut g = DMatrix::<f64>::zeros(r, q);
    for t in 0..q {
        for i in 0..r {
            g[(i, t)] = rng.sample(StandardNormal);
        }
    }
    // x_t = U g_t; rows of the batch are samples.
    let data = (cov.factor() * g).transpose();
    Ok(SampleBatch::from_rows(data))
}

/// A covariance estimate to score: dense, or a factored pair `left * right^T`.
#[derive(Debug, Clone, Copy)]
pub enum EstimateView<'a> {
    Dense(&'a DMatrix<f64>),
    Factored {
        left: &'a DMatrix<f64>,
        right: &'a DMatrix<f64>,
    },
}

/// Relative Frobenius error `|est - truth|_F / |truth|_F`.
///
/// The factored path never materializes an `n x n` matrix: the difference is
/// written as a product of stacked factors and its norm taken from the small
/// triangular QR factors, which avoids the cancellation of a Gram-based
/// expansion.
pub fn relative_error(est: EstimateView<'_>, truth: &TargetCovariance) -> Result<f64> {
    let truth_norm = truth.frobenius_norm();
    if truth_norm == 0.0 {
        return Err(Error::ZeroTruth);
    }
    let n = truth.dim();
    let diff_norm = match est {
        EstimateView::Dense(m) => {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "estimate is {}x{}, truth is {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            (m - truth.to_dense()).norm()
        }
        EstimateView::Factored { left, right } => {
            if left.nrows() != n || right.nrows() != n || left.ncols() != right.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "factored estimate {}x{} * ({}x{})^T vs truth {n}x{n}",
                    left.nrows(),
                    left.ncols(),
                    right.nrows(),
                    right.ncols()
                )));
            }
            factored_difference_norm(left, right, truth.factor())
        }
    };
    Ok(diff_norm / truth_norm)
}

/// `| left right^T - u u^T |_F` without forming any `n x n` matrix:
/// stack `D = [left, -u]`, `E = [right, u]`, take thin QRs, and reduce to the
/// norm of the small product `R_D R_E^T`.
fn factored_difference_norm(left: &DMatrix<f64>, right: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    let n = u.nrows();
    let s = left.ncols() + u.ncols();
    let mut d = DMatrix::<f64>::zeros(n, s);
    let mut e = DMatrix::<f64>::zeros(n, s);
    d.columns_mut(0, left.ncols()).copy_from(left);
    d.columns_mut(left.ncols(), u.ncols()).copy_from(&(-u));
    e.columns_mut(0, right.ncols()).copy_from(right);
    e.columns_mut(right.ncols(), u.ncols()).copy_from(u);
    let rd = d.qr().r();
    let re = e.qr().r();
    (rd * re.transpose()).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gen_target_rejects_bad_dims() {
        assert!(gen_target(4, 2, 3, 0).is_err()); // r > k
        assert!(gen_target(4, 5, 1, 0).is_err()); // k > n
        assert!(gen_target(4, 1, 0, 0).is_err()); // r = 0
    }

    #[test]
    fn gen_target_single_support() {
        let t = gen_target(4, 1, 1, 123).unwrap();
        assert_eq!(t.support().len(), 1);
        let i = t.support()[0];
        let dense = t.to_dense();
        for a in 0..4 {
            for b in 0..4 {
                if (a, b) == (i, i) {
                    assert!(dense[(a, b)] >= 0.0);
                } else {
                    assert_eq!(dense[(a, b)], 0.0);
                }
            }
        }
    }

    #[test]
    fn gen_target_dense_support() {
        let t = gen_target(5, 5, 3, 9).unwrap();
        assert_eq!(t.support(), &[0, 1, 2, 3, 4]);
        for i in 0..5 {
            assert!((0..3).any(|j| t.factor()[(i, j)] != 0.0));
        }
    }

    #[test]
    fn gen_target_exact_row_sparsity_and_rank() {
        let t = gen_target(50, 8, 3, 77).unwrap();
        let mut nonzero_rows = 0;
        for i in 0..50 {
            let nz = (0..3).any(|j| t.factor()[(i, j)] != 0.0);
            if nz {
                nonzero_rows += 1;
                assert!(t.support().contains(&i));
            }
        }
        assert_eq!(nonzero_rows, 8);

        // Numerical rank of U via singular values, threshold 1e-10 * sigma_1.
        let svals = t.factor().clone().svd(false, false).singular_values;
        let smax = svals.max();
        let rank = svals.iter().filter(|&&s| s > 1e-10 * smax).count();
        assert_eq!(rank, 3);
    }

    #[test]
    fn implied_covariance_symmetric_psd() {
        let t = gen_target(30, 6, 2, 5).unwrap();
        let sigma = t.to_dense();
        assert_relative_eq!(sigma.clone(), sigma.transpose(), epsilon = 0.0);
        let eig = nalgebra::SymmetricEigen::new(sigma);
        let lmax = eig.eigenvalues.max();
        for &l in eig.eigenvalues.iter() {
            assert!(l >= -1e-10 * lmax, "eigenvalue {l} too negative");
        }
    }

    #[test]
    fn gen_target_deterministic() {
        let a = gen_target(40, 7, 3, 424242).unwrap();
        let b = gen_target(40, 7, 3, 424242).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_single_column_factor() {
        // U = e1 (single column, single nonzero entry 1): every sample is a
        // scalar multiple of e1.
        let mut factor = DMatrix::zeros(4, 1);
        factor[(0, 0)] = 1.0;
        let cov = TargetCovariance::from_parts(factor, vec![0]).unwrap();
        let batch = sample_gaussian(&cov, 20, 3).unwrap();
        for t in 0..20 {
            let x = batch.sample(t);
            for i in 1..4 {
                assert_eq!(x[i], 0.0);
            }
        }
    }

    #[test]
    fn sample_count_one_mean_is_sample() {
        let cov = gen_target(10, 4, 2, 8).unwrap();
        let batch = sample_gaussian(&cov, 1, 99).unwrap();
        assert_eq!(batch.count(), 1);
        let mean = batch.data().row_sum() / 1.0;
        assert_eq!(mean.transpose(), batch.sample(0));
    }

    #[test]
    fn samples_live_in_factor_span() {
        let cov = gen_target(12, 5, 2, 14).unwrap();
        let batch = sample_gaussian(&cov, 8, 15).unwrap();
        // Project a sample onto the orthogonal complement of span(U).
        let qr = cov.factor().clone().qr();
        let q = qr.q();
        for t in 0..8 {
            let x = batch.sample(t);
            let resid = &x - &q * (q.transpose() * &x);
            assert!(resid.norm() <= 1e-10 * x.norm().max(1.0));
        }
    }

    #[test]
    fn empirical_covariance_converges() {
        let cov = gen_target(30, 5, 2, 2024).unwrap();
        let batch = sample_gaussian(&cov, 100_000, 11).unwrap();
        let emp = batch.empirical_covariance();
        let rel = (emp - cov.to_dense()).norm() / cov.frobenius_norm();
        assert!(rel < 0.05, "LLN check failed: rel = {rel}");
    }

    #[test]
    fn relative_error_identity_zero_scaling() {
        let cov = gen_target(20, 5, 2, 31).unwrap();
        let dense = cov.to_dense();
        let err = relative_error(EstimateView::Dense(&dense), &cov).unwrap();
        assert!(err <= 1e-12);

        let zero = DMatrix::zeros(20, 20);
        let err = relative_error(EstimateView::Dense(&zero), &cov).unwrap();
        assert_relative_eq!(err, 1.0, epsilon = 1e-12);

        let twice = 2.0 * &dense;
        let err = relative_error(EstimateView::Dense(&twice), &cov).unwrap();
        assert_relative_eq!(err, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn relative_error_factored_matches_dense() {
        use rand::Rng;
        let mut rng = rng_from_seed(6021);
        for trial in 0..10 {
            let cov = gen_target(60, 9, 3, 1000 + trial).unwrap();
            let left = DMatrix::from_fn(60, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let right = DMatrix::from_fn(60, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let dense = &left * right.transpose();
            let e_fact =
                relative_error(EstimateView::Factored { left: &left, right: &right }, &cov)
                    .unwrap();
            let e_dense = relative_error(EstimateView::Dense(&dense), &cov).unwrap();
            assert_relative_eq!(e_fact, e_dense, max_relative = 1e-12);
        }
    }

    #[test]
    fn relative_error_zero_truth_rejected() {
        // A valid target always has k nonzero rows, so force the degenerate
        // case through from_parts with an explicitly zero factor.
        let cov = TargetCovariance::from_parts(DMatrix::zeros(4, 1), vec![2]).unwrap();
        let zero = DMatrix::zeros(4, 4);
        assert!(matches!(
            relative_error(EstimateView::Dense(&zero), &cov),
            Err(Error::ZeroTruth)
        ));
    }

    #[test]
    fn matrix_file_round_trip() {
        let cov = gen_target(15, 4, 2, 55).unwrap();
        let text = crate::io::format_matrix(cov.factor());
        let back = crate::io::parse_matrix(&text, "test").unwrap();
        assert_eq!(cov.factor(), &back);
    }
}
