//! Extreme eigenvalue and 2-norm estimates for symmetric operators.
//!
//! Lanczos with full reorthogonalization produces a tridiagonal matrix whose
//! extreme eigenvalues are found by Sturm-sequence bisection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::dense::DenseMatrix;
use crate::linalg::vector::{axpy, dot, norm2, scale};
use crate::operator::LinearOperator;

/// Number of eigenvalues of the symmetric tridiagonal `(alpha, beta)` strictly below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0f64;
    for i in 0..alpha.len() {
        let b2 = if i > 0 { beta[i - 1] * beta[i - 1] } else { 0.0 };
        q = alpha[i] - x - if i > 0 { b2 / q } else { 0.0 };
        if q == 0.0 {
            q = -f64::EPSILON * (alpha[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest eigenvalue (0-based) of a symmetric tridiagonal matrix.
pub fn tridiag_eigenvalue(alpha: &[f64], beta: &[f64], k: usize) -> f64 {
    let n = alpha.len();
    assert!(k < n && beta.len() + 1 == n.max(1));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < n { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    let pad = 1e-14 * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    lo -= pad;
    hi += pad;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lanczos coefficients after at most `steps` iterations from `start`.
pub fn lanczos_tridiagonal(op: &dyn LinearOperator, start: &[f64], steps: usize) -> (Vec<f64>, Vec<f64>) {
    let n = op.dim();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let nrm = norm2(start);
    if nrm == 0.0 || steps == 0 {
        return (alpha, beta);
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut v = start.to_vec();
    scale(1.0 / nrm, &mut v);
    let mut w = vec![0.0; n];
    let mut anorm = 0.0f64;
    for j in 0..steps.min(n) {
        op.apply(&v, &mut w);
        let a = dot(&v, &w);
        alpha.push(a);
        axpy(-a, &v, &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        basis.push(v.clone());
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let b = norm2(&w);
        anorm = anorm.max(a.abs() + b);
        if j + 1 == steps.min(n) || b <= 1e-13 * anorm.max(f64::MIN_POSITIVE) {
            break;
        }
        beta.push(b);
        v.copy_from_slice(&w);
        scale(1.0 / b, &mut v);
    }
    (alpha, beta)
}

/// `(lambda_min, lambda_max)` of a symmetric operator from Lanczos Ritz values.
pub fn symmetric_extreme_eigs(op: &dyn LinearOperator, steps: usize, seed: u64) -> (f64, f64) {
    let n = op.dim();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let (alpha, beta) = lanczos_tridiagonal(op, &start, steps);
    let m = alpha.len();
    (tridiag_eigenvalue(&alpha, &beta, 0), tridiag_eigenvalue(&alpha, &beta, m - 1))
}

struct NormalOp<'a> {
    b: &'a DenseMatrix,
}

impl LinearOperator for NormalOp<'_> {
    fn dim(&self) -> usize {
        self.b.cols()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let bx = self.b.matvec(x);
        y.copy_from_slice(&self.b.matvec_transpose(&bx));
    }
}

/// Spectral norm of a dense matrix via Lanczos on `B^T B`.
pub fn dense_norm2(b: &DenseMatrix) -> f64 {
    if b.cols() == 0 || b.rows() == 0 {
        return 0.0;
    }
    let op = NormalOp { b };
    let (_, hi) = symmetric_extreme_eigs(&op, b.cols(), 0x0e16);
    hi.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::csr::CsrMatrix;

    #[test]
    fn laplacian_1d_extremes() {
        let n = 50;
        let a = CsrMatrix::tridiag_const(n, -1.0, 2.0, -1.0);
        let (lo, hi) = symmetric_extreme_eigs(&a, n, 1);
        let h = std::f64::consts::PI / (n + 1) as f64;
        let want_lo = 2.0 - 2.0 * h.cos();
        let want_hi = 2.0 - 2.0 * (n as f64 * h).cos();
        assert!((lo - want_lo).abs() < 1e-10, "{lo} vs {want_lo}");
        assert!((hi - want_hi).abs() < 1e-10);
    }

    #[test]
    fn norm_of_nonsymmetric() {
        let b = DenseMatrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]);
        assert!((dense_norm2(&b) - 2.0).abs() < 1e-12);
        let d = DenseMatrix::from_diag(&[-3.0, 1.0, 2.0]);
        assert!((dense_norm2(&d) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_bisection() {
        let alpha = [2.0, 2.0];
        let beta = [1.0];
        assert!((tridiag_eigenvalue(&alpha, &beta, 0) - 1.0).abs() < 1e-14);
        assert!((tridiag_eigenvalue(&alpha, &beta, 1) - 3.0).abs() < 1e-14);
    }
}
