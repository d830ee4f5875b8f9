//! Dense matrix exponential and φ-functions.
//!
//! `expm_dense` is scaling-and-squaring with diagonal Padé approximants of
//! degree 3, 5, 7, 9 or 13, selected by the 1-norm thresholds of Higham (2005).
//! The φ-functions `φ_0 = exp`, `φ_k(z) = (φ_{k-1}(z) - φ_{k-1}(0)) / z` are read
//! off the exponential of an augmented block matrix, which avoids the
//! cancellation of the direct recursion near `z = 0`.

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// `exp(-t H)`.
pub fn expm_dense(h: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    h.require_square()?;
    if !t.is_finite() {
        return Err(Error::invalid("time must be finite"));
    }
    expm(&h.scaled(-t))
}

/// `exp(A)` for a square matrix.
pub fn expm(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.require_square()?;
    if !a.is_finite() {
        return Err(Error::Divergence("non-finite entry in matrix exponential argument".into()));
    }
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    if n == 1 {
        let v = a[(0, 0)].exp();
        if !v.is_finite() {
            return Err(Error::Divergence("scalar exponential overflow".into()));
        }
        return DenseMatrix::from_row_major(1, 1, vec![v]);
    }
    let norm = a.norm1();
    if norm == 0.0 {
        return Ok(DenseMatrix::identity(n));
    }
    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, coeffs);
        }
    }
    let s = ((norm / THETA_13).log2().ceil()).max(0.0) as i32;
    let scaled = a.scaled(2f64.powi(-s));
    let mut x = pade13(&scaled)?;
    for _ in 0..s {
        x = x.matmul(&x);
        if !x.is_finite() {
            return Err(Error::Divergence("overflow while squaring".into()));
        }
    }
    Ok(x)
}

fn pade_low(a: &DenseMatrix, b: &[f64]) -> Result<DenseMatrix> {
    let n = a.rows();
    let a2 = a.matmul(a);
    // even/odd split: U = A * sum b_{2j+1} A^{2j}, V = sum b_{2j} A^{2j}
    let mut u_inner = DenseMatrix::identity(n).scaled(b[1]);
    let mut v = DenseMatrix::identity(n).scaled(b[0]);
    let mut pow = a2.clone();
    let mut j = 2;
    while j < b.len() {
        v.add_scaled(b[j], &pow);
        if j + 1 < b.len() {
            u_inner.add_scaled(b[j + 1], &pow);
        }
        j += 2;
        if j < b.len() {
            pow = pow.matmul(&a2);
        }
    }
    let u = a.matmul(&u_inner);
    pade_solve(&u, &v)
}

fn pade13(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    let id = DenseMatrix::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a2.matmul(&a4);
    let b = &B13;

    let mut w1 = a6.scaled(b[13]);
    w1.add_scaled(b[11], &a4);
    w1.add_scaled(b[9], &a2);
    let mut w2 = w1.matmul(&a6);
    w2.add_scaled(b[7], &a6);
    w2.add_scaled(b[5], &a4);
    w2.add_scaled(b[3], &a2);
    w2.add_scaled(b[1], &id);
    let u = a.matmul(&w2);

    let mut z1 = a6.scaled(b[12]);
    z1.add_scaled(b[10], &a4);
    z1.add_scaled(b[8], &a2);
    let mut v = z1.matmul(&a6);
    v.add_scaled(b[6], &a6);
    v.add_scaled(b[4], &a4);
    v.add_scaled(b[2], &a2);
    v.add_scaled(b[0], &id);
    pade_solve(&u, &v)
}

/// `(V - U)^{-1} (V + U)`
fn pade_solve(u: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    let mut p = v.clone();
    p.add_scaled(1.0, u);
    let mut q = v.clone();
    q.add_scaled(-1.0, u);
    let lu = q
        .lu()
        .map_err(|_| Error::Divergence("singular Padé denominator".into()))?;
    let x = lu.solve_matrix(&p);
    if !x.is_finite() {
        return Err(Error::Divergence("non-finite Padé approximant".into()));
    }
    Ok(x)
}

/// `φ_0(-tH), ..., φ_{k_max}(-tH)`.
#[derive(Clone, Debug)]
pub struct PhiChain {
    pub order: usize,
    pub values: Vec<DenseMatrix>,
}

impl PhiChain {
    pub fn get(&self, k: usize) -> &DenseMatrix {
        &self.values[k]
    }
}

/// Evaluates the φ-chain at `-tH` from one exponential of the block matrix
///
/// ```text
/// [ Z  I  0 .. 0 ]
/// [ 0  0  I .. 0 ]
/// [       ..   I ]
/// [ 0  0  0 .. 0 ],   Z = -tH,
/// ```
///
/// whose first block row is `[φ_0(Z), φ_1(Z), ..., φ_k(Z)]`.
pub fn phi_chain(h: &DenseMatrix, t: f64, k_max: i64) -> Result<PhiChain> {
    let m = h.require_square()?;
    if k_max < 0 {
        return Err(Error::invalid("k_max must be non-negative"));
    }
    let k = k_max as usize;
    if k == 0 {
        return Ok(PhiChain {
            order: 0,
            values: vec![expm_dense(h, t)?],
        });
    }
    let dim = m * (k + 1);
    let mut big = DenseMatrix::zeros(dim, dim);
    big.set_block(0, 0, &h.scaled(-t));
    for b in 0..k {
        for i in 0..m {
            big[(b * m + i, (b + 1) * m + i)] = 1.0;
        }
    }
    let e = expm(&big)?;
    let values = (0..=k).map(|j| e.block(0, j * m, m, m)).collect();
    Ok(PhiChain { order: k, values })
}

/// `[φ_0(-tH) b, φ_1(-tH) b, ..., φ_p(-tH) b]` from a single `(m + p)`-dimensional exponential.
pub fn phi_actions(h: &DenseMatrix, t: f64, b: &[f64], p: usize) -> Result<Vec<Vec<f64>>> {
    let m = h.require_square()?;
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: b.len(),
        });
    }
    if p == 0 {
        return Ok(vec![expm_dense(h, t)?.matvec(b)]);
    }
    let dim = m + p;
    let mut big = DenseMatrix::zeros(dim, dim);
    big.set_block(0, 0, &h.scaled(-t));
    for (i, bi) in b.iter().enumerate() {
        big[(i, m)] = *bi;
    }
    for j in 0..p - 1 {
        big[(m + j, m + j + 1)] = 1.0;
    }
    let e = expm(&big)?;
    let mut out = Vec::with_capacity(p + 1);
    out.push(e.block(0, 0, m, m).matvec(b));
    for j in 0..p {
        out.push((0..m).map(|i| e[(i, m + j)]).collect());
    }
    Ok(out)
}

/// Scalar `φ_k(z)` by series for small `|z|` and the recursion otherwise.
pub fn phi_scalar(k: usize, z: f64) -> f64 {
    if z.abs() < 0.5 {
        // sum_{j>=0} z^j / (j + k)!
        let mut term = 1.0 / factorial(k);
        let mut sum = term;
        for j in 1..40 {
            term *= z / (j + k) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let mut phi = z.exp();
        for j in 1..=k {
            phi = (phi - 1.0 / factorial(j - 1)) / z;
        }
        phi
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor_exp(a: &DenseMatrix, terms: usize) -> DenseMatrix {
        let n = a.rows();
        let mut sum = DenseMatrix::identity(n);
        let mut term = DenseMatrix::identity(n);
        for k in 1..terms {
            term = term.matmul(a).scaled(1.0 / k as f64);
            sum.add_scaled(1.0, &term);
        }
        sum
    }

    #[test]
    fn zero_and_diagonal() {
        let z = DenseMatrix::zeros(2, 2);
        assert_eq!(expm_dense(&z, 3.0).unwrap(), DenseMatrix::identity(2));
        let d = DenseMatrix::from_diag(&[1.0, 2.0]);
        let e = expm_dense(&d, 1.0).unwrap();
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn rotation_generator() {
        let h = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let t = std::f64::consts::FRAC_PI_2;
        let e = expm_dense(&h, t).unwrap();
        // exp(-tH) = [[cos t, -sin t], [sin t, cos t]] at t = pi/2
        let (c, s) = (t.cos(), t.sin());
        let want = [[c, -s], [s, c]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((e[(i, j)] - want[i][j]).abs() < 1e-14, "{i}{j}");
            }
        }
    }

    #[test]
    fn matches_taylor_for_small_norms() {
        let a = DenseMatrix::from_rows(&[
            vec![0.1, -0.3, 0.2],
            vec![0.05, 0.2, -0.1],
            vec![-0.2, 0.1, 0.15],
        ]);
        for scale in [0.01, 0.1, 0.5, 1.0 / a.norm1()] {
            let h = a.scaled(scale);
            let e = expm_dense(&h, 1.0).unwrap();
            let mut want = taylor_exp(&h.scaled(-1.0), 30);
            want.add_scaled(-1.0, &e);
            assert!(want.norm1() <= 1e-13 * e.norm1(), "scale {scale}: {}", want.norm1());
        }
    }

    #[test]
    fn every_pade_degree_matches_taylor() {
        let a = DenseMatrix::from_rows(&[
            vec![0.3, -0.5, 0.2, 0.1],
            vec![0.1, -0.2, -0.4, 0.3],
            vec![-0.2, 0.1, 0.25, -0.1],
            vec![0.05, 0.3, -0.1, 0.4],
        ]);
        let base = a.norm1();
        for target in [0.01, 0.2, 0.8, 1.8, 4.0, 12.0] {
            let h = a.scaled(target / base);
            let e = expm_dense(&h, 1.0).unwrap();
            let mut want = taylor_exp(&h.scaled(-1.0), 120);
            want.add_scaled(-1.0, &e);
            assert!(want.norm1() <= 1e-12 * e.norm1(), "norm {target}: {}", want.norm1());
        }
    }

    #[test]
    fn phi_chain_small_cases() {
        let z = DenseMatrix::zeros(1, 1);
        let c = phi_chain(&z, 1.0, 2).unwrap();
        assert!((c.get(0)[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((c.get(1)[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((c.get(2)[(0, 0)] - 0.5).abs() < 1e-15);

        let one = DenseMatrix::from_diag(&[1.0]);
        let c = phi_chain(&one, 1.0, 1).unwrap();
        let want = ((-1f64).exp() - 1.0) / -1.0;
        assert!((c.get(1)[(0, 0)] - want).abs() < 1e-15);
        assert!((want - 0.63212).abs() < 1e-5);

        assert!(phi_chain(&one, 1.0, -1).is_err());
    }

    #[test]
    fn phi_chain_order_zero_is_expm() {
        let h = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![-0.5, 3.0]]);
        let c = phi_chain(&h, 0.7, 0).unwrap();
        assert_eq!(c.get(0), &expm_dense(&h, 0.7).unwrap());
    }

    #[test]
    fn phi_actions_agree_with_chain() {
        let h = DenseMatrix::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![-0.5, 3.0, 0.3],
            vec![0.1, 0.0, 1.0],
        ]);
        let b = [1.0, -2.0, 0.5];
        let chain = phi_chain(&h, 0.8, 3).unwrap();
        let acts = phi_actions(&h, 0.8, &b, 3).unwrap();
        for k in 0..=3 {
            let want = chain.get(k).matvec(&b);
            for (x, y) in acts[k].iter().zip(&want) {
                assert!((x - y).abs() < 1e-13, "k={k}");
            }
        }
    }

    #[test]
    fn scalar_phi_matches_recursion() {
        for &z in &[-3.0, -0.7, -1e-3, 0.0, 0.2, 1.5] {
            let m = DenseMatrix::from_diag(&[-z]);
            let chain = phi_chain(&m, 1.0, 4).unwrap();
            for k in 0..=4 {
                let d = (chain.get(k)[(0, 0)] - phi_scalar(k, z)).abs();
                assert!(d < 1e-13, "z={z} k={k} d={d}");
            }
        }
    }

    #[test]
    fn overflow_reports_divergence() {
        let h = DenseMatrix::from_diag(&[-1000.0, 1.0]);
        assert!(matches!(expm_dense(&h, 1.0), Err(Error::Divergence(_))));
        assert!(expm_dense(&DenseMatrix::zeros(2, 3), 1.0).is_err());
    }
}
