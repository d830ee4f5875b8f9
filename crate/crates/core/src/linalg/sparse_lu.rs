//! Left-looking sparse LU (Gilbert–Peierls) with threshold partial pivoting.
//!
//! No fill-reducing ordering is applied; on banded matrices the fill stays
//! inside the band envelope.

use crate::error::{check_dim, Error, Result};
use crate::linalg::csr::CsrMatrix;

const UNSET: usize = usize::MAX;

/// Factors `P (I + gamma A) = L U`.
#[derive(Clone, Debug)]
pub struct SparseLu {
    n: usize,
    // L without its unit diagonal, by column, with original row indices
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    // U strictly upper part by column, indices in pivot order; diagonal separate
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
    // piv[k] = original row chosen as pivot for column k
    piv: Vec<usize>,
}

/// Factors `I + gamma * A`.
pub fn sparse_lu(a: &CsrMatrix, gamma: f64) -> Result<SparseLu> {
    if !gamma.is_finite() {
        return Err(Error::invalid("shift must be finite"));
    }
    SparseLu::factor(&a.shifted_identity(gamma))
}

impl SparseLu {
    /// Factors a general sparse matrix.
    pub fn factor(b: &CsrMatrix) -> Result<Self> {
        let n = b.n();
        // CSR of the transpose is CSC of b
        let bt = b.transpose();
        let mut l_ptr = vec![0usize];
        let mut l_idx = Vec::new();
        let mut l_val = Vec::new();
        let mut u_ptr = vec![0usize];
        let mut u_idx = Vec::new();
        let mut u_val = Vec::new();
        let mut u_diag = vec![0.0; n];
        let mut piv = vec![UNSET; n];
        let mut pinv = vec![UNSET; n];

        let mut x = vec![0.0; n];
        let mut mark = vec![UNSET; n];
        let mut topo: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for j in 0..n {
            let (cols, vals) = bt.row(j);
            let col_norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // symbolic: reach of the column pattern in the graph of L
            topo.clear();
            for &start in cols {
                if mark[start] == j {
                    continue;
                }
                mark[start] = j;
                stack.push((start, 0));
                while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
                    let k = pinv[node];
                    let mut pushed = false;
                    if k != UNSET {
                        let (lo, hi) = (l_ptr[k], l_ptr[k + 1]);
                        while lo + *pos < hi {
                            let child = l_idx[lo + *pos];
                            *pos += 1;
                            if mark[child] != j {
                                mark[child] = j;
                                stack.push((child, 0));
                                pushed = true;
                                break;
                            }
                        }
                    }
                    if !pushed {
                        topo.push(node);
                        stack.pop();
                    }
                }
            }
            // numeric: sparse triangular solve in reverse postorder
            for (&r, &v) in cols.iter().zip(vals) {
                x[r] = v;
            }
            for &node in topo.iter().rev() {
                let k = pinv[node];
                if k == UNSET {
                    continue;
                }
                let xk = x[node];
                if xk != 0.0 {
                    for p in l_ptr[k]..l_ptr[k + 1] {
                        x[l_idx[p]] -= l_val[p] * xk;
                    }
                }
            }
            // split into U entries and pivot candidates
            let mut best = UNSET;
            let mut best_abs = 0.0f64;
            let mut diag_abs = -1.0f64;
            for &node in &topo {
                let k = pinv[node];
                if k != UNSET {
                    if x[node] != 0.0 {
                        u_idx.push(k);
                        u_val.push(x[node]);
                    }
                } else {
                    let a = x[node].abs();
                    if a > best_abs || best == UNSET {
                        best_abs = a;
                        best = node;
                    }
                    if node == j {
                        diag_abs = a;
                    }
                }
            }
            if best == UNSET || best_abs == 0.0 || best_abs <= 1e-14 * col_norm.max(f64::MIN_POSITIVE) {
                return Err(Error::Singular(format!("no usable pivot in column {j}")));
            }
            // prefer the diagonal to keep the band structure
            let p = if diag_abs >= 0.1 * best_abs { j } else { best };
            let pv = x[p];
            u_diag[j] = pv;
            piv[j] = p;
            pinv[p] = j;
            for &node in &topo {
                if pinv[node] == UNSET && x[node] != 0.0 {
                    l_idx.push(node);
                    l_val.push(x[node] / pv);
                }
            }
            for &node in &topo {
                x[node] = 0.0;
            }
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());
        }
        Ok(Self {
            n,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            u_diag,
            piv,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored nonzeros in `L` and `U`.
    pub fn nnz(&self) -> usize {
        self.l_val.len() + self.u_val.len() + self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, b.len())?;
        let mut w = b.to_vec();
        let mut z = vec![0.0; self.n];
        for k in 0..self.n {
            let zk = w[self.piv[k]];
            z[k] = zk;
            if zk != 0.0 {
                for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                    w[self.l_idx[p]] -= self.l_val[p] * zk;
                }
            }
        }
        for j in (0..self.n).rev() {
            z[j] /= self.u_diag[j];
            let zj = z[j];
            if zj != 0.0 {
                for p in self.u_ptr[j]..self.u_ptr[j + 1] {
                    z[self.u_idx[p]] -= self.u_val[p] * zj;
                }
            }
        }
        Ok(z)
    }
}
