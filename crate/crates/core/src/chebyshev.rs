//! Chebyshev expansion of `exp(-tA) v` with residual control.
//!
//! With `A = c I + d B` and `X = -B`, the approximation is
//! `y = sum' a_k T_k(X) v` where `a_k` interpolate `exp(rho x - sigma)`,
//! `rho = t d`, `sigma = t c`, at the Chebyshev roots. The iteration keeps
//! `u_k = U_k(X) v` (second kind) and accumulates `y`, `y'` and `-Ay` from
//!
//! * `T_k = (U_k - U_{k-2}) / 2`
//! * `T_k' = k U_{k-1}`, hence `d/dt T_k(X(t)) v = k / (2t) (U_k + U_{k-2}) v`
//! * `x T_k = (T_{k+1} + T_{k-1}) / 2 = (U_{k+1} - U_{k-3}) / 4`
//!
//! with `U_{-1} = 0` and `U_{-2} = -1`. The plain case `c = 0`, `d = 1/t` has
//! `rho = 1` and needs the spectrum of `tA` in `[-1, 1]`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::csr::CsrMatrix;
use crate::linalg::vector::{axpy, norm2, rel_diff};
use crate::result::{ExpvResult, HistoryEntry, Status, WorkStats};

/// Interpolation coefficients `c_0..c_m` of a function on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebCoeffs {
    pub m: usize,
    pub quadrature: usize,
    pub c: Vec<f64>,
}

impl ChebCoeffs {
    /// `c_0 / 2 + sum_k c_k T_k(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let (mut t0, mut t1) = (1.0, x);
        let mut s = 0.5 * self.c[0];
        for (k, &ck) in self.c.iter().enumerate().skip(1) {
            if k > 1 {
                let t2 = 2.0 * x * t1 - t0;
                t0 = t1;
                t1 = t2;
            }
            s += ck * t1;
        }
        s
    }
}

/// Coefficients of `exp(x)`.
pub fn cheb_coeffs(m: usize, quadrature: usize) -> Result<ChebCoeffs> {
    cheb_coeffs_scaled(m, quadrature, 1.0, 0.0)
}

/// Coefficients of `exp(rho x - sigma)`.
pub fn cheb_coeffs_scaled(m: usize, quadrature: usize, rho: f64, sigma: f64) -> Result<ChebCoeffs> {
    if quadrature < m + 1 {
        return Err(Error::invalid("quadrature size must exceed the degree"));
    }
    let q = Quadrature::new(quadrature, rho, sigma);
    let c = (0..=m).map(|k| q.coeff(k)).collect();
    Ok(ChebCoeffs { m, quadrature, c })
}

/// Samples of `exp(rho cos(theta_j) - sigma)` at the Chebyshev angles.
struct Quadrature {
    theta: Vec<f64>,
    f: Vec<f64>,
}

impl Quadrature {
    fn new(size: usize, rho: f64, sigma: f64) -> Self {
        let mm = size as f64;
        let theta: Vec<f64> = (1..=size).map(|j| PI * (j as f64 - 0.5) / mm).collect();
        let f = theta.iter().map(|th| (rho * th.cos() - sigma).exp()).collect();
        Self { theta, f }
    }

    fn coeff(&self, k: usize) -> f64 {
        let s: f64 = self.theta.iter().zip(&self.f).map(|(th, fj)| fj * (k as f64 * th).cos()).sum();
        2.0 * s / self.theta.len() as f64
    }
}

/// How the spectrum of `A` is mapped onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectrumScaling {
    /// The spectrum of `t A` already lies in `[-1, 1]`.
    Plain,
    /// The real spectrum of `A` lies in `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
}

impl SpectrumScaling {
    /// Interval from the Gershgorin discs of `A`.
    pub fn gershgorin(a: &CsrMatrix) -> Self {
        let (lo, hi) = a.gershgorin();
        SpectrumScaling::Interval { lo, hi }
    }

    /// `(c, d)` with `A = c I + d B`.
    fn affine(&self, t: f64) -> (f64, f64) {
        match *self {
            SpectrumScaling::Plain => (0.0, 1.0 / t),
            SpectrumScaling::Interval { lo, hi } => {
                let d = 0.5 * (hi - lo);
                // a point spectrum still needs a nonzero half-width
                (0.5 * (hi + lo), if d > 0.0 { d } else { hi.abs().max(1.0) * 1e-3 })
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChebOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub scaling: SpectrumScaling,
    /// Quadrature size; defaults to `max(2 max_iter, 128)`.
    pub quadrature: Option<usize>,
    /// Keep iterating after the tolerance is met (for studying the error past the stop).
    pub run_to_max: bool,
}

impl Default for ChebOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            scaling: SpectrumScaling::Plain,
            quadrature: None,
            run_to_max: false,
        }
    }
}

/// Rolling state: five `U` vectors and the three accumulated sums.
///
/// `y_prime` holds `y' + c y` and `minus_ay` holds `-(A - cI) y`; their
/// difference is the residual `-Ay - y'`.
pub struct ChebState<'a> {
    a: &'a CsrMatrix,
    c: f64,
    d: f64,
    t: f64,
    coeffs: Vec<f64>,
    // extends `coeffs` on demand
    quadrature: Option<Quadrature>,
    u_m2: Vec<f64>,
    u_m1: Vec<f64>,
    u_0: Vec<f64>,
    u_1: Vec<f64>,
    u_2: Vec<f64>,
    y: Vec<f64>,
    y_prime: Vec<f64>,
    minus_ay: Vec<f64>,
    k: usize,
    matvecs: usize,
    // sum' a_k T_k(0), i.e. y(0) = p0 v in the plain case
    p0: f64,
}

impl<'a> ChebState<'a> {
    pub fn new(a: &'a CsrMatrix, v: &[f64], t: f64, scaling: SpectrumScaling, coeffs: &ChebCoeffs) -> Result<Self> {
        Self::build(a, v, t, scaling, coeffs.c.clone(), None)
    }

    /// Coefficients are computed as the degree grows, with a fixed quadrature size.
    fn with_quadrature(a: &'a CsrMatrix, v: &[f64], t: f64, scaling: SpectrumScaling, size: usize) -> Result<Self> {
        let (c, d) = scaling.affine(t);
        let q = Quadrature::new(size, t * d, t * c);
        Self::build(a, v, t, scaling, vec![q.coeff(0)], Some(q))
    }

    fn build(
        a: &'a CsrMatrix,
        v: &[f64],
        t: f64,
        scaling: SpectrumScaling,
        coeffs: Vec<f64>,
        quadrature: Option<Quadrature>,
    ) -> Result<Self> {
        let n = a.n();
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid("t must be positive"));
        }
        let (c, d) = scaling.affine(t);
        let mut st = Self {
            a,
            c,
            d,
            t,
            coeffs,
            quadrature,
            u_m2: v.iter().map(|x| -x).collect(),
            u_m1: vec![0.0; n],
            u_0: v.to_vec(),
            u_1: vec![0.0; n],
            u_2: vec![0.0; n],
            y: v.to_vec(),
            y_prime: vec![0.0; n],
            minus_ay: vec![0.0; n],
            k: 0,
            matvecs: 0,
            p0: 0.0,
        };
        // u_1 = U_1(X) v = 2 X v
        let mut u1 = std::mem::take(&mut st.u_1);
        st.apply_x(v, &mut u1);
        for x in u1.iter_mut() {
            *x *= 2.0;
        }
        st.u_1 = u1;
        let c0 = st.coeff(0)?;
        st.p0 = 0.5 * c0;
        for yi in st.y.iter_mut() {
            *yi *= 0.5 * c0;
        }
        axpy(0.25 * c0 * d, &st.u_1, &mut st.minus_ay);
        Ok(st)
    }

    fn coeff(&mut self, k: usize) -> Result<f64> {
        if let Some(q) = &self.quadrature {
            while self.coeffs.len() <= k && self.coeffs.len() < q.theta.len() {
                self.coeffs.push(q.coeff(self.coeffs.len()));
            }
        }
        self.coeffs
            .get(k)
            .copied()
            .ok_or_else(|| Error::invalid("Chebyshev degree exceeds the precomputed coefficients"))
    }

    /// `out = X x = -(A - cI) x / d`.
    fn apply_x(&mut self, x: &[f64], out: &mut [f64]) {
        self.matvecs += 1;
        self.a.mul_into(x, out);
        let (c, d) = (self.c, self.d);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -(*o - c * xi) / d;
        }
    }

    /// Adds the degree `k + 1` term.
    pub fn advance(&mut self) -> Result<()> {
        let k = self.k + 1;
        let ck = self.coeff(k)?;
        // u_2 = 2 X u_1 - u_0
        let mut u2 = std::mem::take(&mut self.u_2);
        let u1 = std::mem::take(&mut self.u_1);
        self.apply_x(&u1, &mut u2);
        for (x, u0) in u2.iter_mut().zip(&self.u_0) {
            *x = 2.0 * *x - u0;
        }
        self.u_1 = u1;
        let (fy, fd, fa) = (0.5 * ck, ck * k as f64 / (2.0 * self.t), 0.25 * ck * self.d);
        for i in 0..self.y.len() {
            self.y[i] += fy * (self.u_1[i] - self.u_m1[i]);
            self.y_prime[i] += fd * (self.u_1[i] + self.u_m1[i]);
            self.minus_ay[i] += fa * (u2[i] - self.u_m2[i]);
        }
        // shift: u_{-2} <- u_{-1} <- u_0 <- u_1 <- u_2
        std::mem::swap(&mut self.u_m2, &mut self.u_m1);
        std::mem::swap(&mut self.u_m1, &mut self.u_0);
        std::mem::swap(&mut self.u_0, &mut self.u_1);
        std::mem::swap(&mut self.u_1, &mut u2);
        self.u_2 = u2;
        self.k = k;
        self.p0 += ck * [1.0, 0.0, -1.0, 0.0][k % 4];
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn matvecs(&self) -> usize {
        self.matvecs
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// `y_k'(t)`.
    pub fn y_prime(&self) -> Vec<f64> {
        self.y_prime.iter().zip(&self.y).map(|(d, y)| d - self.c * y).collect()
    }

    /// `-A y_k(t)`.
    pub fn minus_ay(&self) -> Vec<f64> {
        self.minus_ay.iter().zip(&self.y).map(|(m, y)| m - self.c * y).collect()
    }

    /// `|y_k(0) - v| / |v|` for the plain scaling, where `y_k(0) = P_k(0) v`.
    ///
    /// The residual does not see this defect: for `A = 0` it vanishes at every degree.
    pub fn initial_defect(&self) -> f64 {
        (self.p0 - 1.0).abs()
    }

    pub fn residual_norm(&self) -> f64 {
        let d: Vec<f64> = self.minus_ay.iter().zip(&self.y_prime).map(|(m, p)| m - p).collect();
        norm2(&d)
    }
}

/// `exp(-tA) v` by the residual-controlled Chebyshev iteration.
pub fn cheb_expv(
    a: &CsrMatrix,
    v: &[f64],
    t: f64,
    opts: &ChebOptions,
    reference: Option<&[f64]>,
) -> Result<ExpvResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    if opts.max_iter == 0 {
        return Err(Error::invalid("max_iter must be positive"));
    }
    let beta = norm2(v);
    if beta == 0.0 {
        return Ok(ExpvResult {
            y: v.to_vec(),
            history: Vec::new(),
            status: Status::Converged,
            stats: WorkStats::default(),
            warnings: Vec::new(),
        });
    }
    let mut warnings = Vec::new();
    let (glo, ghi) = a.gershgorin();
    let (c, d) = opts.scaling.affine(t);
    if (glo - c) / d < -1.0 - 1e-12 || (ghi - c) / d > 1.0 + 1e-12 {
        warnings.push(format!(
            "Gershgorin interval [{glo:.3e}, {ghi:.3e}] is not inside the scaled interval [{:.3e}, {:.3e}]; the iteration may diverge",
            c - d,
            c + d
        ));
    }
    let quad = opts.quadrature.unwrap_or((2 * opts.max_iter).max(128));
    let mut st = ChebState::with_quadrature(a, v, t, opts.scaling, quad.max(opts.max_iter + 1))?;
    let mut history = Vec::new();
    let mut status = Status::BudgetExhausted;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..opts.max_iter {
        st.advance()?;
        let res = st.residual_norm();
        history.push(HistoryEntry {
            iter: st.degree(),
            cycle: 0,
            matvecs: st.matvecs(),
            inner_work: 0,
            residual_norm: res,
            error: reference.map(|r| rel_diff(st.y(), r)),
        });
        if !res.is_finite() {
            return Err(Error::Divergence(format!("Chebyshev residual overflowed at degree {}", st.degree())));
        }
        let ic_ok = !matches!(opts.scaling, SpectrumScaling::Plain) || st.initial_defect() <= opts.tol;
        if res <= opts.tol * beta && ic_ok && status != Status::Converged {
            status = Status::Converged;
            if !opts.run_to_max {
                break;
            }
            best = Some((res, st.y().to_vec()));
        }
    }
    let y = match best {
        Some((_, y)) => y,
        None => st.y().to_vec(),
    };
    Ok(ExpvResult {
        y,
        history,
        status,
        stats: WorkStats {
            matvecs: st.matvecs(),
            ..WorkStats::default()
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm::expm_dense;
    use crate::problems::{conv_diff_2d, default_v, diag_test, ConvDiffSpec};

    fn t_k(k: usize, x: f64) -> f64 {
        (k as f64 * x.acos()).cos()
    }

    #[test]
    fn interpolant_reproduces_exp() {
        let c = cheb_coeffs(30, 64).unwrap();
        assert!((c.eval(0.0) - 1.0).abs() <= 1e-14);
        for x in [-1.0, -0.3, 0.7, 1.0] {
            assert!((c.eval(x) - f64::exp(x)).abs() <= 1e-14 * f64::exp(x).max(1.0));
        }
    }

    #[test]
    fn c0_is_twice_bessel_i0() {
        // I_0(1) = sum (1/4)^j / (j!)^2
        let mut i0 = 0.0;
        let mut term = 1.0;
        for j in 0..30 {
            if j > 0 {
                term *= 0.25 / (j * j) as f64;
            }
            i0 += term;
        }
        let c = cheb_coeffs(5, 256).unwrap();
        assert!((c.c[0] - 2.0 * i0).abs() < 1e-14);
        assert!((c.c[0] - 2.532131755).abs() < 1e-9);
    }

    #[test]
    fn degree_zero_is_sample_mean() {
        let c = cheb_coeffs(0, 16).unwrap();
        let mean: f64 = (1..=16).map(|j| (PI * (j as f64 - 0.5) / 16.0).cos().exp()).sum::<f64>() / 16.0;
        assert!((c.eval(0.3) - mean).abs() < 1e-15);
    }

    #[test]
    fn scalar_identities() {
        for x in [-0.99, -0.5, 0.1, 0.8] {
            let u = |k: isize| -> f64 {
                match k {
                    -2 => -1.0,
                    -1 => 0.0,
                    _ => {
                        let (mut a, mut b) = (1.0, 2.0 * x);
                        for _ in 0..k {
                            let c = 2.0 * x * b - a;
                            a = b;
                            b = c;
                        }
                        a
                    }
                }
            };
            for k in 1..20usize {
                let ki = k as isize;
                assert!((t_k(k, x) - 0.5 * (u(ki) - u(ki - 2))).abs() < 1e-12);
                assert!((x * u(ki) - 0.5 * (u(ki + 1) + u(ki - 1))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_matrix_gives_v() {
        let a = CsrMatrix::zeros(3);
        let v = vec![1.0, -2.0, 0.5];
        let r = cheb_expv(&a, &v, 1.0, &ChebOptions { tol: 1e-12, ..Default::default() }, None).unwrap();
        assert!(r.converged());
        assert!(rel_diff(&r.y, &v) <= 1e-13);
    }

    #[test]
    fn diagonal_normal_case() {
        let (a, v) = diag_test(200, false, 3).unwrap();
        let reference: Vec<f64> = (0..200).map(|i| (-a.get(i, i)).exp() * v[i]).collect();
        let r = cheb_expv(&a, &v, 1.0, &ChebOptions { tol: 1e-10, ..Default::default() }, Some(&reference)).unwrap();
        assert!(r.converged());
        assert!(rel_diff(&r.y, &reference) <= 1e-10);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn one_matvec_per_degree() {
        let (a, v) = diag_test(50, false, 1).unwrap();
        let r = cheb_expv(&a, &v, 1.0, &ChebOptions { tol: 1e-12, ..Default::default() }, None).unwrap();
        for (i, h) in r.history.iter().enumerate() {
            assert_eq!(h.matvecs, i + 2);
            assert_eq!(h.iter, i + 1);
        }
    }

    #[test]
    fn scaled_spectrum_conv_diff() {
        let a = conv_diff_2d(&ConvDiffSpec::new(8, 10.0)).unwrap();
        let v = default_v(a.n());
        let reference = expm_dense(&a.to_dense(), 1.0).unwrap().matvec(&v);
        let opts = ChebOptions {
            tol: 1e-8,
            scaling: SpectrumScaling::gershgorin(&a),
            ..Default::default()
        };
        let r = cheb_expv(&a, &v, 1.0, &opts, Some(&reference)).unwrap();
        assert!(r.converged());
        assert!(rel_diff(&r.y, &reference) <= 1e-7);
    }

    #[test]
    fn accessors_give_true_derivative_and_product() {
        let a = conv_diff_2d(&ConvDiffSpec::new(4, 5.0)).unwrap();
        let v = default_v(a.n());
        let t = 0.01;
        let scaling = SpectrumScaling::gershgorin(&a);
        let (c, d) = scaling.affine(t);
        let coeffs = cheb_coeffs_scaled(60, 128, t * d, t * c).unwrap();
        let mut st = ChebState::new(&a, &v, t, scaling, &coeffs).unwrap();
        for _ in 0..40 {
            st.advance().unwrap();
        }
        let mut ay = vec![0.0; v.len()];
        a.mul_into(st.y(), &mut ay);
        let m = st.minus_ay();
        for (x, y) in m.iter().zip(&ay) {
            assert!((x + y).abs() <= 1e-10 * norm2(&ay));
        }
    }
}
