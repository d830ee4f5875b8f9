//! Exponential Richardson iteration and residual-based error bounds.
//!
//! Each iteration solves `e' = -M e + r_k(t)`, `e(0) = 0`, with a cheap
//! splitting `M ~ A`, sets `y_{k+1} = y_k + e`, and gets the new residual as
//! `r_{k+1}(t) = (M - A) e(t)`. Residuals are stored as samples on a time grid.

use crate::error::{Error, Result};
use crate::linalg::csr::CsrMatrix;
use crate::linalg::dense::DenseMatrix;
use crate::linalg::eig::{dense_norm2, symmetric_extreme_eigs};
use crate::linalg::expm::phi_chain;
use crate::linalg::tridiag::Tridiagonal;
use crate::linalg::vector::norm2;
use crate::ode::{integrate, OdeOptions};
use crate::result::{rel_error, ExpvResult, HistoryEntry, Status, WorkStats};

/// A vector-valued function of time known at grid points, with PCHIP interpolation
/// in each component.
#[derive(Clone, Debug)]
pub struct SampledVectorFunction {
    grid: Vec<f64>,
    samples: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl SampledVectorFunction {
    pub fn new(grid: Vec<f64>, samples: Vec<Vec<f64>>) -> Result<Self> {
        if grid.is_empty() || grid.len() != samples.len() {
            return Err(Error::invalid("grid and samples must be non-empty and of equal length"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || !grid.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        let n = samples[0].len();
        if samples.iter().any(|s| s.len() != n) {
            return Err(Error::invalid("all samples must have the same length"));
        }
        let slopes = pchip_slopes(&grid, &samples);
        Ok(Self { grid, samples, slopes })
    }

    /// `s` equally spaced points on `[0, t_end]`.
    pub fn uniform_grid(t_end: f64, s: usize) -> Vec<f64> {
        if s < 2 {
            return vec![t_end];
        }
        (0..s).map(|i| t_end * i as f64 / (s - 1) as f64).collect()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    /// Value at `t`, clamped to the grid.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let g = &self.grid;
        let last = g.len() - 1;
        if last == 0 || t <= g[0] {
            out.copy_from_slice(&self.samples[0]);
            return;
        }
        if t >= g[last] {
            out.copy_from_slice(&self.samples[last]);
            return;
        }
        let k = g.partition_point(|&x| x <= t) - 1;
        let h = g[k + 1] - g[k];
        let s = (t - g[k]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        let (y0, y1, d0, d1) = (&self.samples[k], &self.samples[k + 1], &self.slopes[k], &self.slopes[k + 1]);
        for i in 0..out.len() {
            out[i] = h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i];
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// Largest sample norm.
    pub fn max_norm(&self) -> f64 {
        self.samples.iter().map(|s| norm2(s)).fold(0.0, f64::max)
    }

    /// `[r_bar(t)]_i = max_{s <= t} |r_i(s)|` over the samples up to `t`.
    pub fn envelope(&self, t: f64) -> Vec<f64> {
        let mut env = vec![0.0f64; self.dim()];
        for (s, x) in self.grid.iter().zip(&self.samples) {
            if *s > t * (1.0 + 1e-14) {
                break;
            }
            for (e, xi) in env.iter_mut().zip(x) {
                *e = e.max(xi.abs());
            }
        }
        env
    }
}

// Fritsch–Carlson slopes with the three-point, shape-preserving end conditions.
fn pchip_slopes(grid: &[f64], samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = grid.len();
    let n = samples[0].len();
    let mut d = vec![vec![0.0; n]; s];
    if s < 2 {
        return d;
    }
    let h: Vec<f64> = grid.windows(2).map(|w| w[1] - w[0]).collect();
    for i in 0..n {
        let del: Vec<f64> = (0..s - 1).map(|k| (samples[k + 1][i] - samples[k][i]) / h[k]).collect();
        if s == 2 {
            d[0][i] = del[0];
            d[1][i] = del[0];
            continue;
        }
        for k in 1..s - 1 {
            if del[k - 1] * del[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k][i] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
            }
        }
        d[0][i] = end_slope(h[0], h[1], del[0], del[1]);
        d[s - 1][i] = end_slope(h[s - 2], h[s - 3], del[s - 2], del[s - 3]);
    }
    d
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// Placement of the residual samples in `[0, t_end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleGrid {
    Uniform,
    /// `0` followed by geometrically spaced points from `first` to `t_end`.
    Geometric { first: f64 },
}

impl SampleGrid {
    pub fn points(&self, t_end: f64, s: usize) -> Vec<f64> {
        match *self {
            SampleGrid::Uniform => SampledVectorFunction::uniform_grid(t_end, s),
            SampleGrid::Geometric { first } => {
                if s < 3 || !(first > 0.0 && first < t_end) {
                    return SampledVectorFunction::uniform_grid(t_end, s);
                }
                let q = (t_end / first).powf(1.0 / (s - 2) as f64);
                let mut g = vec![0.0];
                g.extend((0..s - 1).map(|j| first * q.powi(j as i32)));
                g[s - 1] = t_end;
                g
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RichardsonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub n_samples: usize,
    pub grid: SampleGrid,
    /// Integrator tolerance; defaults to `0.1 tol`.
    pub ode_rtol: Option<f64>,
}

impl Default for RichardsonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 50,
            n_samples: 20,
            grid: SampleGrid::Uniform,
            ode_rtol: None,
        }
    }
}

/// Sampled trajectories of the final iterate.
#[derive(Clone, Debug)]
pub struct RichardsonTrace {
    /// `r_k(t)` of the returned iterate.
    pub residual: SampledVectorFunction,
    /// `y_k(t)` on the grid.
    pub y: Vec<Vec<f64>>,
    /// `y_k'(t)` on the grid, from the integrator's node derivatives.
    pub y_prime: Vec<Vec<f64>>,
}

/// `exp(-t_end A) v` by exponential Richardson with splitting `M`.
pub fn exp_richardson(
    a: &CsrMatrix,
    m: &Tridiagonal,
    v: &[f64],
    t_end: f64,
    opts: &RichardsonOptions,
    reference: Option<&[f64]>,
) -> Result<ExpvResult> {
    exp_richardson_traced(a, m, v, t_end, opts, reference).map(|(r, _)| r)
}

pub fn exp_richardson_traced(
    a: &CsrMatrix,
    m: &Tridiagonal,
    v: &[f64],
    t_end: f64,
    opts: &RichardsonOptions,
    reference: Option<&[f64]>,
) -> Result<(ExpvResult, RichardsonTrace)> {
    let n = a.n();
    if m.n() != n || v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if m.n() != n { m.n() } else { v.len() },
        });
    }
    if !(opts.tol > 0.0) || opts.n_samples < 2 || opts.max_iter == 0 {
        return Err(Error::invalid("need tol > 0, at least 2 samples and max_iter >= 1"));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("t_end must be positive and finite"));
    }
    let beta = norm2(v);
    let grid = opts.grid.points(t_end, opts.n_samples);
    let s = grid.len();
    // M - A
    let split = m.to_csr().lin_comb(1.0, a, -1.0)?;

    let mut stats = WorkStats::default();
    let mut av = vec![0.0; n];
    a.mul_into(v, &mut av);
    stats.matvecs += 1;
    let r0: Vec<f64> = av.iter().map(|x| -x).collect();
    let mut residual = SampledVectorFunction::new(grid.clone(), vec![r0.clone(); s])?;
    let mut y_grid = vec![v.to_vec(); s];
    let mut dy_grid = vec![vec![0.0; n]; s];
    let mut history = Vec::new();
    let mut warnings = Vec::new();

    let rtol = opts.ode_rtol.unwrap_or(0.1 * opts.tol).clamp(1e-14, 0.1);
    let ode_opts = OdeOptions {
        rtol,
        atol: 0.01 * opts.tol * beta,
        stop_times: grid.clone(),
        dense_output: false,
        ..Default::default()
    };

    let mut status = Status::BudgetExhausted;
    let mut res_max = residual.max_norm();
    if res_max <= opts.tol * beta {
        status = Status::Converged;
    }
    let mut iter = 0;
    while status != Status::Converged && iter < opts.max_iter {
        let forcing = |t: f64, out: &mut [f64]| residual.eval_into(t, out);
        let sol = integrate(m, &forcing, &vec![0.0; n], t_end, &ode_opts)?;
        stats.inner_work += sol.stats.steps;
        stats.lu_factorizations += sol.stats.factorizations;
        stats.solves += sol.stats.solves;
        let mut new_samples = Vec::with_capacity(s);
        for (j, &tj) in grid.iter().enumerate() {
            let idx = sol
                .node_index(tj)
                .ok_or_else(|| Error::Integrator { t: tj, reason: "missing grid node".into() })?;
            let e = &sol.states[idx];
            for (yi, ei) in y_grid[j].iter_mut().zip(e) {
                *yi += ei;
            }
            for (di, fi) in dy_grid[j].iter_mut().zip(&sol.derivs[idx]) {
                *di += fi;
            }
            let mut r = vec![0.0; n];
            split.mul_into(e, &mut r);
            stats.matvecs += 1;
            new_samples.push(r);
        }
        residual = SampledVectorFunction::new(grid.clone(), new_samples)?;
        iter += 1;
        res_max = residual.max_norm();
        history.push(HistoryEntry {
            iter,
            cycle: 0,
            matvecs: stats.matvecs,
            inner_work: stats.inner_work,
            residual_norm: res_max,
            error: rel_error(&y_grid[s - 1], reference),
        });
        if !res_max.is_finite() {
            return Err(Error::Divergence("Richardson residual is not finite".into()));
        }
        if res_max <= opts.tol * beta {
            status = Status::Converged;
        }
    }
    if status != Status::Converged {
        warnings.push(format!("residual {res_max:.3e} above tolerance after {iter} iterations"));
    }
    let result = ExpvResult {
        y: y_grid[s - 1].clone(),
        history,
        status,
        stats,
        warnings,
    };
    Ok((
        result,
        RichardsonTrace {
            residual,
            y: y_grid,
            y_prime: dy_grid,
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMode {
    /// `t ||r_bar(t)||`, valid for symmetric positive definite `A`.
    Spd,
    /// `|| |t phi(-tA)| r_bar(t) ||` with the matrix of absolute values (dense, small `n`).
    Elementwise,
}

/// Largest dimension for which dense `phi(-tA)` is formed.
pub const DENSE_BOUND_LIMIT: usize = 500;

/// Upper bound on `||y(t) - y_k(t)||` from the sampled residual of `y_k`.
pub fn phi_error_bound(a: &CsrMatrix, r: &SampledVectorFunction, t: f64, mode: BoundMode) -> Result<f64> {
    if r.dim() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: r.dim(),
        });
    }
    let env = r.envelope(t);
    match mode {
        BoundMode::Spd => {
            if !a.symmetry_probe(0x5eed) {
                return Err(Error::invalid("matrix is not symmetric"));
            }
            let (lo, _) = symmetric_extreme_eigs(a, a.n().min(60), 11);
            if lo <= 0.0 {
                return Err(Error::invalid("matrix is not positive definite"));
            }
            Ok(t * norm2(&env))
        }
        BoundMode::Elementwise => {
            if a.n() > DENSE_BOUND_LIMIT {
                return Err(Error::invalid(format!(
                    "elementwise bound needs n <= {DENSE_BOUND_LIMIT}"
                )));
            }
            let tphi = t_phi1(&a.to_dense(), t)?;
            Ok(norm2(&tphi.abs().matvec(&env)))
        }
    }
}

/// `t phi_1(-tA)`.
fn t_phi1(a: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    if t == 0.0 {
        return Ok(DenseMatrix::zeros(a.rows(), a.cols()));
    }
    let chain = phi_chain(a, t, 1)?;
    Ok(chain.get(1).scaled(t))
}

/// Residual-reduction factors of exponential and linear-system Richardson.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionCurve {
    pub t: Vec<f64>,
    /// `|| |t (M - A) phi(-tM)| ||_2` at each `t`.
    pub exponential: Vec<f64>,
    /// `||(M - A) M^{-1}||_2`.
    pub linear: f64,
}

pub fn richardson_contraction_bound(a: &CsrMatrix, m: &CsrMatrix, t_grid: &[f64]) -> Result<ContractionCurve> {
    if a.n() != m.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: m.n(),
        });
    }
    if a.n() > DENSE_BOUND_LIMIT {
        return Err(Error::invalid(format!("contraction bound needs n <= {DENSE_BOUND_LIMIT}")));
    }
    let md = m.to_dense();
    let split = m.lin_comb(1.0, a, -1.0)?.to_dense();
    let minv = md.lu()?.inverse();
    let linear = dense_norm2(&split.matmul(&minv));
    let mut exponential = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if t < 0.0 {
            return Err(Error::invalid("times must be non-negative"));
        }
        let b = split.matmul(&t_phi1(&md, t)?);
        exponential.push(dense_norm2(&b.abs()));
    }
    Ok(ContractionCurve {
        t: t_grid.to_vec(),
        exponential,
        linear,
    })
}
