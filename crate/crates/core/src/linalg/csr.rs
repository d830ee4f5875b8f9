//! Compressed sparse row storage for the large operator `A`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::linalg::vector::norm2;
use crate::operator::{LinearOperator, MatvecCounter};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn new(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if row_ptr.len() != n + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                n + 1
            )));
        }
        if row_ptr[0] != 0 {
            return Err(Error::InvalidStructure("row_ptr[0] must be 0".into()));
        }
        if col_idx.len() != values.len() {
            return Err(Error::InvalidStructure(format!(
                "{} column indices but {} values",
                col_idx.len(),
                values.len()
            )));
        }
        if row_ptr[n] != col_idx.len() {
            return Err(Error::InvalidStructure(format!(
                "row_ptr[n] = {} but nnz = {}",
                row_ptr[n],
                col_idx.len()
            )));
        }
        for i in 0..n {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            if hi < lo {
                return Err(Error::InvalidStructure(format!("row_ptr decreases at row {i}")));
            }
            let cols = &col_idx[lo..hi];
            for (k, &c) in cols.iter().enumerate() {
                if c >= n {
                    return Err(Error::InvalidStructure(format!("column {c} out of range in row {i}")));
                }
                if k > 0 && cols[k - 1] >= c {
                    return Err(Error::InvalidStructure(format!(
                        "columns not strictly increasing in row {i}"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(i, j, _) in &sorted {
            if i >= n || j >= n {
                return Err(Error::InvalidStructure(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(n, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Tridiagonal matrix with constant bands.
    pub fn tridiag_const(n: usize, lower: f64, diag: f64, upper: f64) -> Self {
        let mut t = Vec::with_capacity(3 * n);
        for i in 0..n {
            if i > 0 {
                t.push((i, i - 1, lower));
            }
            t.push((i, i, diag));
            if i + 1 < n {
                t.push((i, i + 1, upper));
            }
        }
        Self::from_triplets(n, &t).expect("valid tridiagonal pattern")
    }

    /// Keeps entries with `|v| > drop_tol`.
    pub fn from_dense(a: &DenseMatrix, drop_tol: f64) -> Result<Self> {
        let n = a.require_square()?;
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = a[(i, j)];
                if v.abs() > drop_tol {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.iter() {
            d[(i, j)] += v;
        }
        d
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Iterates over `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    /// `A x`, counting one matvec in `counter`.
    pub fn spmv(&self, x: &[f64], counter: &MatvecCounter) -> Result<Vec<f64>> {
        check_dim(self.n, x.len())?;
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        counter.bump();
        Ok(y)
    }

    /// Uncounted `y = A x`.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = 0.0;
            for k in lo..hi {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// Uncounted `y = A^T x`.
    pub fn mul_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, j, v) in self.iter() {
            y[j] += v * x[i];
        }
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.n, &t).expect("transpose of valid matrix")
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Entries with `|i - j| <= bandwidth`.
    pub fn band(&self, bandwidth: usize) -> Self {
        let t: Vec<_> = self
            .iter()
            .filter(|&(i, j, _)| i.abs_diff(j) <= bandwidth)
            .collect();
        Self::from_triplets(self.n, &t).expect("band of valid matrix")
    }

    /// `alpha * self + beta * other`
    pub fn lin_comb(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<Self> {
        check_dim(self.n, other.n)?;
        let mut t: Vec<_> = self.iter().map(|(i, j, v)| (i, j, alpha * v)).collect();
        t.extend(other.iter().map(|(i, j, v)| (i, j, beta * v)));
        Self::from_triplets(self.n, &t)
    }

    /// `I + gamma * A`
    pub fn shifted_identity(&self, gamma: f64) -> Self {
        self.lin_comb(gamma, &CsrMatrix::identity(self.n), 1.0)
            .expect("same dimension")
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= a);
        m
    }

    pub fn norm1(&self) -> f64 {
        let mut colsum = vec![0.0; self.n];
        for (_, j, v) in self.iter() {
            colsum[j] += v.abs();
        }
        colsum.into_iter().fold(0.0, f64::max)
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        norm2(&self.values)
    }

    /// Gershgorin enclosure `[lo, hi]` of the real parts of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            let mut d = 0.0;
            let mut r = 0.0;
            for (&j, &x) in c.iter().zip(v) {
                if j == i {
                    d = x;
                } else {
                    r += x.abs();
                }
            }
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        if self.n == 0 {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    /// Randomized symmetry probe: `||(A - A^T) x|| <= 1e-12 ||A|| ||x||` on three vectors.
    pub fn symmetry_probe(&self, seed: u64) -> bool {
        let scale = self.norm1().max(self.norm_inf());
        if scale == 0.0 {
            return true;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ax = vec![0.0; self.n];
        let mut atx = vec![0.0; self.n];
        for _ in 0..3 {
            let x: Vec<f64> = (0..self.n).map(|_| StandardNormal.sample(&mut rng)).collect();
            self.mul_into(&x, &mut ax);
            self.mul_transpose_into(&x, &mut atx);
            let d: Vec<f64> = ax.iter().zip(&atx).map(|(a, b)| a - b).collect();
            if norm2(&d) > 1e-12 * scale * norm2(&x) {
                return false;
            }
        }
        true
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_into(x, y)
    }
    fn is_symmetric(&self) -> bool {
        self.symmetry_probe(0x5eed)
    }
    fn norm_estimate(&self) -> Option<f64> {
        Some(self.norm1().max(self.norm_inf()))
    }
}
