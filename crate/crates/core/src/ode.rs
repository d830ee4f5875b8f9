//! Adaptive TR-BDF2 for linear IVPs `u' = -H u + g(t)`.
//!
//! The scheme is the one-step trapezoidal/BDF2 composite with `gamma = 2 - sqrt(2)`,
//! so both implicit stages share the matrix `I + (gamma/2) h H`. The local error
//! estimate is the Hosea–Shampine difference filtered through that matrix,
//! controlled per unit step.

use crate::error::{check_dim, Error, Result};
use crate::linalg::dense::{DenseLu, DenseMatrix};
use crate::linalg::expm::{factorial, phi_actions};
use crate::linalg::tridiag::{TridiagLu, Tridiagonal};
use crate::linalg::vector::{axpy, norm2};
use crate::operator::LinearOperator;

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;

/// The linear part `H` of the IVP together with solves against `I + cH`.
pub trait StiffLinear {
    type Factor;
    fn dim(&self) -> usize;
    /// `y = H x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn factor_shifted(&self, c: f64) -> Result<Self::Factor>;
    fn solve_in_place(factor: &Self::Factor, b: &mut [f64]);
}

impl StiffLinear for DenseMatrix {
    type Factor = DenseLu;
    fn dim(&self) -> usize {
        self.rows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        LinearOperator::apply(self, x, y)
    }
    fn factor_shifted(&self, c: f64) -> Result<DenseLu> {
        let mut m = self.scaled(c);
        m.add_identity(1.0);
        m.lu()
    }
    fn solve_in_place(factor: &DenseLu, b: &mut [f64]) {
        let x = factor.solve(b);
        b.copy_from_slice(&x);
    }
}

impl StiffLinear for Tridiagonal {
    type Factor = TridiagLu;
    fn dim(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        LinearOperator::apply(self, x, y)
    }
    fn factor_shifted(&self, c: f64) -> Result<TridiagLu> {
        Tridiagonal::factor_shifted(self, c)
    }
    fn solve_in_place(factor: &TridiagLu, b: &mut [f64]) {
        factor.solve_in_place(b)
    }
}

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
    /// Times the integrator must step onto exactly (sorted, within `[0, t_end]`).
    pub stop_times: Vec<f64>,
    /// Keep every accepted step; otherwise only `0`, the stop times and `t_end`.
    pub dense_output: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-12,
            initial_step: None,
            max_steps: 200_000,
            stop_times: Vec::new(),
            dense_output: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub steps: usize,
    pub rejected: usize,
    pub factorizations: usize,
    pub solves: usize,
}

/// Accepted step endpoints with states and derivatives, interpolated by cubic Hermite.
#[derive(Clone, Debug)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
    pub stats: OdeStats,
}

impl OdeSolution {
    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.times.len();
        if n < 2 {
            return 0;
        }
        let t = t.clamp(self.times[0], self.times[n - 1]);
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// `u(t)`; `t` is clamped to the integration interval.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if self.times.len() == 1 {
            return self.states[0].clone();
        }
        let i = self.locate(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let t = t.clamp(self.times[0], self.t_end());
        if t == t0 {
            return self.states[i].clone();
        }
        if t == t1 {
            return self.states[i + 1].clone();
        }
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let (y0, y1, f0, f1) = (&self.states[i], &self.states[i + 1], &self.derivs[i], &self.derivs[i + 1]);
        (0..y0.len())
            .map(|k| h00 * y0[k] + h10 * h * f0[k] + h01 * y1[k] + h11 * h * f1[k])
            .collect()
    }

    /// `u'(t)` of the interpolant.
    pub fn eval_derivative(&self, t: f64) -> Vec<f64> {
        if self.times.len() == 1 {
            return self.derivs[0].clone();
        }
        let i = self.locate(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let t = t.clamp(self.times[0], self.t_end());
        let h = t1 - t0;
        let s = (t - t0) / h;
        let d00 = 6.0 * s * (s - 1.0) / h;
        let d10 = (1.0 - s) * (1.0 - 3.0 * s);
        let d01 = -d00;
        let d11 = s * (3.0 * s - 2.0);
        let (y0, y1, f0, f1) = (&self.states[i], &self.states[i + 1], &self.derivs[i], &self.derivs[i + 1]);
        (0..y0.len())
            .map(|k| d00 * y0[k] + d10 * f0[k] + d01 * y1[k] + d11 * f1[k])
            .collect()
    }

    /// Index of an accepted step endpoint equal to `t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&x| x == t)
    }
}

/// Integrates `u' = -H u + g(t)` on `[0, t_end]`. `g` writes the forcing into its buffer.
pub fn integrate<L: StiffLinear>(
    h_op: &L,
    g: &dyn Fn(f64, &mut [f64]),
    u0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<OdeSolution> {
    let m = h_op.dim();
    check_dim(m, u0.len())?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("t_end must be positive and finite"));
    }
    if !(opts.rtol >= 1e-14 && opts.rtol <= 0.1) || opts.atol < 0.0 {
        return Err(Error::invalid("integrator tolerances out of range"));
    }
    let d = 0.5 * GAMMA;
    let w_prev = (1.0 - GAMMA) * (1.0 - GAMMA) / (GAMMA * (2.0 - GAMMA));
    let w_gamma = 1.0 / (GAMMA * (2.0 - GAMMA));
    let err_c = (-3.0 * GAMMA * GAMMA + 4.0 * GAMMA - 2.0) / (12.0 * (2.0 - GAMMA));

    let rhs = |t: f64, u: &[f64], out: &mut [f64]| {
        g(t, out);
        let mut hu = vec![0.0; m];
        h_op.apply(u, &mut hu);
        axpy(-1.0, &hu, out);
    };

    let mut stats = OdeStats::default();
    let mut t = 0.0;
    let mut u = u0.to_vec();
    let mut f = vec![0.0; m];
    rhs(t, &u, &mut f);

    let mut times = vec![0.0];
    let mut states = vec![u.clone()];
    let mut derivs = vec![f.clone()];

    let mut stops: Vec<f64> = opts.stop_times.iter().copied().filter(|&s| s > 0.0 && s < t_end).collect();
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup();
    stops.push(t_end);
    let mut next_stop = 0;

    let mut h = match opts.initial_step {
        Some(h0) if h0 > 0.0 => h0.min(t_end),
        _ => {
            let sc = opts.rtol * norm2(&u) + opts.atol;
            let fnorm = norm2(&f);
            let guess = if fnorm > 0.0 { 0.5 * (sc / fnorm).cbrt().min(sc / fnorm * 1e3) } else { t_end };
            guess.clamp(1e-6 * t_end, 0.1 * t_end)
        }
    };
    let h_min = 1e-14 * t_end;

    let mut cached: Option<(f64, L::Factor)> = None;
    let mut ug = vec![0.0; m];
    let mut fg = vec![0.0; m];
    let mut un = vec![0.0; m];
    let mut fnew = vec![0.0; m];
    let mut est = vec![0.0; m];
    let mut gbuf = vec![0.0; m];

    while t < t_end {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::Integrator {
                t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        let target = stops[next_stop];
        let mut step = h;
        let mut hits_stop = false;
        if t + step >= target * (1.0 - 1e-12) || t + 1.05 * step >= target {
            step = target - t;
            hits_stop = true;
        }
        if step < h_min {
            return Err(Error::Integrator {
                t,
                reason: format!("step size underflow (h = {step:.3e})"),
            });
        }
        let lu = match &cached {
            Some((hc, lu)) if *hc == step => lu,
            _ => {
                let lu = h_op.factor_shifted(d * step).map_err(|e| Error::Integrator {
                    t,
                    reason: format!("stage matrix factorization failed: {e}"),
                })?;
                stats.factorizations += 1;
                cached = Some((step, lu));
                &cached.as_ref().unwrap().1
            }
        };

        // trapezoidal stage to t + gamma h
        let tg = t + GAMMA * step;
        g(tg, &mut gbuf);
        for k in 0..m {
            ug[k] = u[k] + d * step * (f[k] + gbuf[k]);
        }
        L::solve_in_place(lu, &mut ug);
        // BDF2 stage to t + h
        let t1 = if hits_stop { target } else { t + step };
        g(t1, &mut gbuf);
        for k in 0..m {
            un[k] = w_gamma * ug[k] - w_prev * u[k] + d * step * gbuf[k];
        }
        L::solve_in_place(lu, &mut un);
        stats.solves += 2;

        rhs(tg, &ug, &mut fg);
        rhs(t1, &un, &mut fnew);
        for k in 0..m {
            est[k] = 2.0 * err_c * step * (f[k] / GAMMA - fg[k] / (GAMMA * (1.0 - GAMMA)) + fnew[k] / (1.0 - GAMMA));
        }
        L::solve_in_place(lu, &mut est);
        stats.solves += 1;

        // error per unit step keeps the global error proportional to rtol
        let scale = (opts.rtol * norm2(&u).max(norm2(&un)) + opts.atol) * (step / t_end);
        let err = if scale > 0.0 { norm2(&est) / scale } else { f64::INFINITY };
        let err = if err.is_nan() { f64::INFINITY } else { err };
        let factor = if err == 0.0 {
            5.0
        } else if err.is_finite() {
            (0.9 / err.sqrt()).clamp(0.2, 5.0)
        } else {
            0.2
        };
        if err <= 1.0 {
            t = t1;
            u.copy_from_slice(&un);
            f.copy_from_slice(&fnew);
            if opts.dense_output || hits_stop {
                times.push(t);
                states.push(u.clone());
                derivs.push(f.clone());
            }
            stats.steps += 1;
            if hits_stop {
                next_stop += 1;
                // a clipped step says nothing about the natural step length
                if factor > 1.0 {
                    h = h.max(step * factor.min(2.0));
                } else {
                    h = step * factor;
                }
            } else if factor > 1.2 {
                h = step * factor;
            }
        } else {
            stats.rejected += 1;
            h = step * factor;
        }
    }
    Ok(OdeSolution {
        times,
        states,
        derivs,
        stats,
    })
}

/// Exact solution of `u' = -H u + p(t) b`, `u(0) = 0`, with `p(t) = sum_j a_j t^j`:
/// `u(t) = sum_j a_j j! t^{j+1} phi_{j+1}(-tH) b`.
pub fn polynomial_forcing_solution(h: &DenseMatrix, coeffs: &[f64], b: &[f64], t: f64) -> Result<Vec<f64>> {
    let m = h.require_square()?;
    check_dim(m, b.len())?;
    if coeffs.len() > 13 {
        return Err(Error::invalid("polynomial degree must not exceed 12"));
    }
    let mut u = vec![0.0; m];
    if coeffs.is_empty() || t == 0.0 {
        return Ok(u);
    }
    let acts = phi_actions(h, t, b, coeffs.len())?;
    for (j, a) in coeffs.iter().enumerate() {
        let c = a * factorial(j) * t.powi(j as i32 + 1);
        axpy(c, &acts[j + 1], &mut u);
    }
    Ok(u)
}

/// Closed-form solutions at each of `times` for forcing `p(t) * w_scale * e_1`.
pub fn integrate_polynomial_forcing(
    h: &DenseMatrix,
    coeffs: &[f64],
    w_scale: f64,
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let m = h.require_square()?;
    let mut b = vec![0.0; m];
    if m > 0 {
        b[0] = w_scale;
    }
    times.iter().map(|&t| polynomial_forcing_solution(h, coeffs, &b, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts(rtol: f64) -> OdeOptions {
        OdeOptions {
            rtol,
            atol: rtol * 1e-3,
            ..Default::default()
        }
    }

    fn random_spd(m: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DenseMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let mut a = b.transpose().matmul(&b);
        a.add_identity(0.5);
        a
    }

    #[test]
    fn constant_forcing_is_exact() {
        let h = DenseMatrix::zeros(2, 2);
        let g = |_t: f64, out: &mut [f64]| {
            out[0] = 2.0;
            out[1] = -1.0;
        };
        let sol = integrate(&h, &g, &[1.0, 0.0], 3.0, &opts(1e-8)).unwrap();
        let u = sol.final_state();
        assert!((u[0] - 7.0).abs() < 1e-12 && (u[1] + 3.0).abs() < 1e-12);
        let mid = sol.eval(1.5);
        assert!((mid[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_decay() {
        let h = DenseMatrix::from_diag(&[1.0]);
        let zero = |_t: f64, out: &mut [f64]| out[0] = 0.0;
        for rtol in [1e-4, 1e-6, 1e-8] {
            let sol = integrate(&h, &zero, &[1.0], 1.0, &opts(rtol)).unwrap();
            let err = (sol.final_state()[0] - (-1f64).exp()).abs();
            assert!(err < 10.0 * rtol, "rtol {rtol}: {err}");
        }
    }

    #[test]
    fn stop_times_are_hit_and_dense_output_matches_nodes() {
        let h = DenseMatrix::from_diag(&[3.0, 0.5]);
        let g = |t: f64, out: &mut [f64]| {
            out[0] = t.sin();
            out[1] = 1.0;
        };
        let mut o = opts(1e-7);
        o.stop_times = vec![0.25, 0.5, 0.75];
        let sol = integrate(&h, &g, &[1.0, 1.0], 1.0, &o).unwrap();
        for s in [0.25, 0.5, 0.75, 1.0] {
            let i = sol.node_index(s).expect("stop time is a node");
            assert_eq!(sol.eval(s), sol.states[i]);
        }
    }

    #[test]
    fn polynomial_forcing_oracle() {
        let h = random_spd(8, 5);
        let coeffs = [1.0, -0.5, 0.25, 0.3];
        let mut b = vec![0.0; 8];
        b[0] = 1.5;
        let g = |t: f64, out: &mut [f64]| {
            out.fill(0.0);
            out[0] = 1.5 * (coeffs[0] + t * (coeffs[1] + t * (coeffs[2] + t * coeffs[3])));
        };
        let rtol = 1e-8;
        let sol = integrate(&h, &g, &vec![0.0; 8], 1.0, &opts(rtol)).unwrap();
        let exact = polynomial_forcing_solution(&h, &coeffs, &b, 1.0).unwrap();
        let err = crate::linalg::vector::rel_diff(sol.final_state(), &exact);
        assert!(err <= 10.0 * rtol, "{err}");
    }

    #[test]
    fn error_scales_linearly_with_rtol() {
        let mut ratio_sum = 0.0;
        for seed in 0..10 {
            let h = random_spd(6, 100 + seed);
            let coeffs = [0.5, 1.0, -0.7, 0.2];
            let mut b = vec![0.0; 6];
            b[0] = 1.0;
            let g = |t: f64, out: &mut [f64]| {
                out.fill(0.0);
                out[0] = coeffs[0] + t * (coeffs[1] + t * (coeffs[2] + t * coeffs[3]));
            };
            let exact = polynomial_forcing_solution(&h, &coeffs, &b, 2.0).unwrap();
            let err = |rtol: f64| {
                let sol = integrate(&h, &g, &[0.0; 6], 2.0, &opts(rtol)).unwrap();
                crate::linalg::vector::rel_diff(sol.final_state(), &exact)
            };
            ratio_sum += err(1e-6) / err(5e-7);
        }
        let mean = ratio_sum / 10.0;
        assert!((1.5..=4.0).contains(&mean), "{mean}");
    }

    #[test]
    fn linear_in_forcing() {
        let h = random_spd(4, 9);
        let g1 = |t: f64, out: &mut [f64]| {
            out.fill(0.0);
            out[0] = t.cos();
        };
        let g2 = |t: f64, out: &mut [f64]| {
            out.fill(0.0);
            out[2] = 1.0 + t;
        };
        let g12 = |t: f64, out: &mut [f64]| {
            out.fill(0.0);
            out[0] = t.cos();
            out[2] = 1.0 + t;
        };
        let rtol = 1e-7;
        let z = [0.0; 4];
        let a = integrate(&h, &g1, &z, 1.0, &opts(rtol)).unwrap();
        let b = integrate(&h, &g2, &z, 1.0, &opts(rtol)).unwrap();
        let c = integrate(&h, &g12, &z, 1.0, &opts(rtol)).unwrap();
        let sum: Vec<f64> = a.final_state().iter().zip(b.final_state()).map(|(x, y)| x + y).collect();
        assert!(crate::linalg::vector::rel_diff(&sum, c.final_state()) <= 5.0 * rtol);
    }

    #[test]
    fn closed_form_scalar_cases() {
        let z = DenseMatrix::zeros(1, 1);
        let u = integrate_polynomial_forcing(&z, &[1.0], 1.0, &[0.5, 2.0]).unwrap();
        assert!((u[0][0] - 0.5).abs() < 1e-15 && (u[1][0] - 2.0).abs() < 1e-15);
        // p(t) = 1 + t on H = 0 integrates to t + t^2/2
        let u = integrate_polynomial_forcing(&z, &[1.0, 1.0], 1.0, &[2.0]).unwrap();
        assert!((u[0][0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn underflow_is_reported() {
        let h = DenseMatrix::from_diag(&[1.0]);
        let g = |t: f64, out: &mut [f64]| out[0] = if t > 0.5 { f64::NAN } else { 0.0 };
        assert!(integrate(&h, &g, &[1.0], 1.0, &opts(1e-6)).is_err());
    }
}
