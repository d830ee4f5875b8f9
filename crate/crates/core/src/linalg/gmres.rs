//! Restarted GMRES with optional right preconditioning, and an SSOR preconditioner.

use crate::error::{check_dim, Error, Result};
use crate::linalg::csr::CsrMatrix;
use crate::linalg::vector::{axpy, dot, norm2, scale};
use crate::operator::LinearOperator;

const BREAKDOWN_TOL: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct GmresOptions {
    pub rtol: f64,
    pub restart: usize,
    /// Total inner iterations over all cycles.
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            restart: 100,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||b - A x|| / ||b||`, recomputed from the returned iterate.
    pub relative_residual: f64,
}

/// Solves `op x = b`. With a preconditioner `P ~ op^{-1}`, iterates on `op P` and returns `x = P u`.
pub fn gmres(
    op: &dyn LinearOperator,
    b: &[f64],
    opts: &GmresOptions,
    precond: Option<&dyn LinearOperator>,
) -> Result<GmresSolution> {
    let n = op.dim();
    check_dim(n, b.len())?;
    if !(opts.rtol > 0.0 && opts.rtol < 1.0) {
        return Err(Error::invalid("gmres rtol must lie in (0, 1)"));
    }
    if opts.restart == 0 {
        return Err(Error::invalid("gmres restart must be positive"));
    }
    if let Some(p) = precond {
        check_dim(n, p.dim())?;
    }
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(GmresSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let target = opts.rtol * bnorm;
    let m = opts.restart;
    let mut iterations = 0;
    let mut tmp = vec![0.0; n];
    let mut r = b.to_vec();
    let mut rnorm = bnorm;

    let apply_precond = |v: &[f64], out: &mut [f64]| match precond {
        Some(p) => p.apply(v, out),
        None => out.copy_from_slice(v),
    };

    while iterations < opts.max_iter {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut v0 = r.clone();
        scale(1.0 / rnorm, &mut v0);
        basis.push(v0);
        // Hessenberg columns after rotation (upper triangular), rotations, rhs
        let mut h_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![rnorm];
        let mut breakdown = false;

        for j in 0..m {
            if iterations >= opts.max_iter {
                break;
            }
            iterations += 1;
            apply_precond(&basis[j], &mut tmp);
            let mut w = vec![0.0; n];
            op.apply(&tmp, &mut w);
            let wnorm0 = norm2(&w);
            let mut h = vec![0.0; j + 2];
            for (i, vi) in basis.iter().enumerate() {
                let hij = dot(vi, &w);
                h[i] = hij;
                axpy(-hij, vi, &mut w);
            }
            // second pass keeps the basis orthogonal in the presence of cancellation
            for (i, vi) in basis.iter().enumerate() {
                let c = dot(vi, &w);
                h[i] += c;
                axpy(-c, vi, &mut w);
            }
            let hnext = norm2(&w);
            h[j + 1] = hnext;
            for i in 0..j {
                let (a, bb) = (h[i], h[i + 1]);
                h[i] = cs[i] * a + sn[i] * bb;
                h[i + 1] = -sn[i] * a + cs[i] * bb;
            }
            let (a, bb) = (h[j], h[j + 1]);
            let denom = a.hypot(bb);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (a / denom, bb / denom) };
            cs.push(c);
            sn.push(s);
            h[j] = denom;
            h[j + 1] = 0.0;
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s * gj);
            h.truncate(j + 1);
            h_cols.push(h);

            if hnext <= BREAKDOWN_TOL * wnorm0.max(f64::MIN_POSITIVE) {
                breakdown = true;
                break;
            }
            if g[j + 1].abs() <= target {
                break;
            }
            scale(1.0 / hnext, &mut w);
            basis.push(w);
        }

        // back substitution on the rotated Hessenberg
        let k = h_cols.len();
        let mut yk = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (jj, col) in h_cols.iter().enumerate().skip(i + 1) {
                s -= col[i] * yk[jj];
            }
            yk[i] = if h_cols[i][i] != 0.0 { s / h_cols[i][i] } else { 0.0 };
        }
        let mut u = vec![0.0; n];
        for (yi, vi) in yk.iter().zip(&basis) {
            axpy(*yi, vi, &mut u);
        }
        apply_precond(&u, &mut tmp);
        axpy(1.0, &tmp, &mut x);

        op.apply(&x, &mut tmp);
        for i in 0..n {
            r[i] = b[i] - tmp[i];
        }
        rnorm = norm2(&r);
        if rnorm <= target {
            return Ok(GmresSolution {
                x,
                iterations,
                relative_residual: rnorm / bnorm,
            });
        }
        if breakdown && k > 0 && h_cols[k - 1][k - 1] == 0.0 {
            return Err(Error::Singular("gmres breakdown on a singular operator".into()));
        }
    }
    Err(Error::NotConverged {
        iterations,
        residual: rnorm / bnorm,
        best: Box::new(x),
    })
}

/// Symmetric successive over-relaxation, applied as the inverse `M^{-1}`.
pub struct Ssor<'a> {
    a: &'a CsrMatrix,
    diag: Vec<f64>,
    omega: f64,
}

impl<'a> Ssor<'a> {
    pub fn new(a: &'a CsrMatrix, omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega < 2.0) {
            return Err(Error::invalid("SSOR relaxation must lie in (0, 2)"));
        }
        let diag = a.diagonal();
        if let Some(i) = diag.iter().position(|d| *d == 0.0) {
            return Err(Error::Singular(format!("zero diagonal at row {i} in SSOR")));
        }
        Ok(Self { a, diag, omega })
    }
}

impl LinearOperator for Ssor<'_> {
    fn dim(&self) -> usize {
        self.a.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.a.n();
        let w = self.omega;
        // (D/w + L) z = x
        for i in 0..n {
            let (cols, vals) = self.a.row(i);
            let mut s = x[i];
            for (&j, &v) in cols.iter().zip(vals) {
                if j < i {
                    s -= v * y[j];
                }
            }
            y[i] = s * w / self.diag[i];
        }
        // z <- (D/w) z, then (D/w + U) y = z
        for i in 0..n {
            y[i] *= self.diag[i] / w;
        }
        for i in (0..n).rev() {
            let (cols, vals) = self.a.row(i);
            let mut s = y[i];
            for (&j, &v) in cols.iter().zip(vals) {
                if j > i {
                    s -= v * y[j];
                }
            }
            y[i] = s * w / self.diag[i];
        }
        scale((2.0 - w) / w, y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::DenseMatrix;
    use crate::operator::Identity;

    #[test]
    fn identity_one_iteration() {
        let b = [1.0, -2.0, 3.0];
        let s = gmres(&Identity(3), &b, &GmresOptions::default(), None).unwrap();
        assert_eq!(s.iterations, 1);
        for (x, y) in s.x.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_exact() {
        let a = DenseMatrix::from_diag(&[1.0, 2.0, 4.0]);
        let opts = GmresOptions {
            rtol: 1e-12,
            ..Default::default()
        };
        let s = gmres(&a, &[1.0, 1.0, 1.0], &opts, None).unwrap();
        for (x, y) in s.x.iter().zip(&[1.0, 0.5, 0.25]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_tridiagonal_residual() {
        let n = 100;
        let a = CsrMatrix::tridiag_const(n, -1.0, 2.5, -1.0);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let opts = GmresOptions {
            rtol: 1e-8,
            restart: 20,
            max_iter: 2000,
        };
        let s = gmres(&a, &b, &opts, None).unwrap();
        let mut ax = vec![0.0; n];
        a.mul_into(&s.x, &mut ax);
        let r: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-8 * norm2(&b));

        let pre = Ssor::new(&a, 1.2).unwrap();
        let sp = gmres(&a, &b, &opts, Some(&pre)).unwrap();
        a.mul_into(&sp.x, &mut ax);
        let r: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-8 * norm2(&b));
        assert!(sp.iterations < s.iterations);
    }

    #[test]
    fn budget_exhaustion_carries_best() {
        let n = 200;
        let a = CsrMatrix::tridiag_const(n, -1.0, 2.0, -1.0);
        let b = vec![1.0; n];
        let opts = GmresOptions {
            rtol: 1e-12,
            restart: 5,
            max_iter: 10,
        };
        match gmres(&a, &b, &opts, None) {
            Err(Error::NotConverged { iterations, best, .. }) => {
                assert_eq!(iterations, 10);
                assert_eq!(best.len(), n);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
