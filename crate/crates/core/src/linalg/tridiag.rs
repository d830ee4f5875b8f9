//! Tridiagonal matrices and the Thomas algorithm.

use crate::error::{check_dim, Error, Result};
use crate::linalg::csr::CsrMatrix;
use crate::operator::LinearOperator;

/// `lower[i] = M[i+1,i]`, `diag[i] = M[i,i]`, `upper[i] = M[i,i+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        let off = n.saturating_sub(1);
        check_dim(off, lower.len())?;
        check_dim(off, upper.len())?;
        Ok(Self { lower, diag, upper })
    }

    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self {
            lower: vec![0.0; off],
            diag: vec![0.0; n],
            upper: vec![0.0; off],
        }
    }

    pub fn constant(n: usize, lower: f64, diag: f64, upper: f64) -> Self {
        let off = n.saturating_sub(1);
        Self {
            lower: vec![lower; off],
            diag: vec![diag; n],
            upper: vec![upper; off],
        }
    }

    /// The three central diagonals of `a`; everything else is dropped.
    pub fn from_csr(a: &CsrMatrix) -> Self {
        let mut m = Self::zeros(a.n());
        for (i, j, v) in a.iter() {
            if i == j {
                m.diag[i] = v;
            } else if j == i + 1 {
                m.upper[i] = v;
            } else if i == j + 1 {
                m.lower[j] = v;
            }
        }
        m
    }

    pub fn diagonal_of(a: &CsrMatrix) -> Self {
        let mut m = Self::zeros(a.n());
        m.diag = a.diagonal();
        m
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let n = self.n();
        let mut trip = Vec::with_capacity(3 * n);
        for i in 0..n {
            if i > 0 {
                trip.push((i, i - 1, self.lower[i - 1]));
            }
            trip.push((i, i, self.diag[i]));
            if i + 1 < n {
                trip.push((i, i + 1, self.upper[i]));
            }
        }
        CsrMatrix::from_triplets(n, &trip).expect("tridiagonal triplets are in range")
    }

    /// Factors `I + alpha * M` once for repeated solves.
    pub fn factor_shifted(&self, alpha: f64) -> Result<TridiagLu> {
        let n = self.n();
        let mut c = vec![0.0; n.saturating_sub(1)];
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        let scale = self
            .diag
            .iter()
            .map(|x| (1.0 + alpha * x).abs())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        for i in 0..n {
            let mut di = 1.0 + alpha * self.diag[i];
            if i > 0 {
                l[i - 1] = alpha * self.lower[i - 1] / d[i - 1];
                di -= l[i - 1] * c[i - 1];
            }
            if di.abs() <= 1e-300 || di.abs() < f64::EPSILON * 1e-3 * scale {
                return Err(Error::Singular(format!("zero pivot at row {i} in tridiagonal solve")));
            }
            d[i] = di;
            if i + 1 < n {
                c[i] = alpha * self.upper[i];
            }
        }
        Ok(TridiagLu { l, d, c })
    }
}

impl LinearOperator for Tridiagonal {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
    }
}

/// LU factors of a shifted tridiagonal matrix (no pivoting).
#[derive(Clone, Debug)]
pub struct TridiagLu {
    l: Vec<f64>,
    d: Vec<f64>,
    c: Vec<f64>,
}

impl TridiagLu {
    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.d.len();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= self.c[i] * x[i + 1];
            }
            x[i] = s / self.d[i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solves `(I + alpha M) x = b` by the Thomas algorithm.
pub fn lu_solve_tridiagonal(m: &Tridiagonal, alpha: f64, b: &[f64]) -> Result<Vec<f64>> {
    check_dim(m.n(), b.len())?;
    Ok(m.factor_shifted(alpha)?.solve(b))
}
