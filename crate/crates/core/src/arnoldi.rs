//! Arnoldi/Lanczos approximation of `exp(-tA) v` with residual-based control.
//!
//! For `y_k(t) = V_k exp(-t H_k) beta e_1` the residual `-A y_k - y_k'` is the
//! scalar function `psi_k(t) = -beta h_{k+1,k} e_k^T exp(-t H_k) e_1` times `v_{k+1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::linalg::expm::expm_dense;
use crate::linalg::vector::{axpy, dot, norm2, scale};
use crate::operator::{apply_alloc, Counted, LinearOperator, MatvecCounter};
use crate::result::{rel_error, ExpvResult, HistoryEntry, Status, WorkStats};

/// `A V_k = V_k H_k + h_{k+1,k} v_{k+1} e_k^T`.
#[derive(Clone, Debug)]
pub struct KrylovDecomposition {
    basis: Vec<Vec<f64>>,
    // column j holds h_{0..=j+1, j}
    hess: Vec<Vec<f64>>,
    v_next: Vec<f64>,
    beta: f64,
    symmetric: bool,
    invariant: bool,
    hnorm: f64,
}

/// `r(t) = psi * w` at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualEval {
    pub psi: f64,
    pub w_norm: f64,
    pub norm: f64,
}

impl KrylovDecomposition {
    /// Empty decomposition seeded with `v`. `symmetric` selects the Lanczos recurrence.
    pub fn new(v: &[f64], symmetric: bool) -> Result<Self> {
        let beta = norm2(v);
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::invalid("start vector must be nonzero and finite"));
        }
        let mut v1 = v.to_vec();
        scale(1.0 / beta, &mut v1);
        Ok(Self {
            basis: Vec::new(),
            hess: Vec::new(),
            v_next: v1,
            beta,
            symmetric,
            invariant: false,
            hnorm: 0.0,
        })
    }

    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn n(&self) -> usize {
        self.v_next.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn v_next(&self) -> &[f64] {
        &self.v_next
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// True once an invariant subspace was found (`h_{k+1,k} = 0`).
    pub fn is_invariant(&self) -> bool {
        self.invariant
    }

    pub fn h_next(&self) -> f64 {
        match self.hess.last() {
            Some(col) if !self.invariant => col[col.len() - 1],
            _ => 0.0,
        }
    }

    /// The square `k x k` Hessenberg matrix `H_k`.
    pub fn hessenberg(&self) -> DenseMatrix {
        let k = self.k();
        let mut h = DenseMatrix::zeros(k, k);
        for (j, col) in self.hess.iter().enumerate() {
            for (i, &x) in col.iter().enumerate().take(k) {
                h[(i, j)] = x;
            }
        }
        h
    }

    /// Runs up to `steps` Arnoldi steps; returns the number performed.
    pub fn extend(&mut self, op: &dyn LinearOperator, steps: usize) -> Result<usize> {
        if steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if op.dim() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: op.dim(),
            });
        }
        let mut done = 0;
        while done < steps && !self.invariant && self.k() < self.n() {
            self.step_with(|v| Ok(apply_alloc(op, v)))?;
            done += 1;
        }
        Ok(done)
    }

    /// One Arnoldi step where `f` applies the operator to the current start vector.
    /// Does nothing once the space is invariant or full.
    pub(crate) fn step_with<F>(&mut self, f: F) -> Result<()>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>>,
    {
        if self.invariant || self.k() >= self.n() {
            return Ok(());
        }
        let j = self.k();
        let mut w = f(&self.v_next)?;
        if w.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: w.len() });
        }
        let vj = std::mem::take(&mut self.v_next);
        self.basis.push(vj);
        let mut col = vec![0.0; j + 2];
        if self.symmetric {
            if j > 0 {
                let b = self.hess[j - 1][j];
                col[j - 1] = b;
                axpy(-b, &self.basis[j - 1], &mut w);
            }
            let a = dot(&self.basis[j], &w);
            col[j] = a;
            axpy(-a, &self.basis[j], &mut w);
            // full reorthogonalization; the corrections are rounding-level and not recorded
            for q in &self.basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        } else {
            for _pass in 0..2 {
                for (i, q) in self.basis.iter().enumerate() {
                    let c = dot(q, &w);
                    col[i] += c;
                    axpy(-c, q, &mut w);
                }
            }
        }
        let h = norm2(&w);
        let colnorm = norm2(&col[..=j]);
        self.hnorm = self.hnorm.hypot(colnorm);
        col[j + 1] = h;
        self.hess.push(col);
        if h <= 1e-12 * self.hnorm.max(h) || self.k() == self.n() && h <= 1e-10 * self.hnorm {
            self.invariant = true;
            if let Some(c) = self.hess.last_mut() {
                c[j + 1] = 0.0;
            }
            self.v_next = vec![0.0; self.n()];
        } else {
            scale(1.0 / h, &mut w);
            self.v_next = w;
        }
        Ok(())
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.k() == 0 {
            return Err(Error::invalid("decomposition has no basis vectors yet"));
        }
        Ok(())
    }

    /// `u_k(t) = exp(-t H_k) beta e_1`.
    pub fn projected(&self, t: f64) -> Result<Vec<f64>> {
        self.require_nonempty()?;
        let e = expm_dense(&self.hessenberg(), t)?;
        Ok((0..self.k()).map(|i| self.beta * e[(i, 0)]).collect())
    }

    fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        for (c, q) in coeffs.iter().zip(&self.basis) {
            axpy(*c, q, &mut y);
        }
        y
    }

    /// `y_k(t) = V_k exp(-t H_k) beta e_1`.
    pub fn eval_y(&self, t: f64) -> Result<Vec<f64>> {
        if t == 0.0 && self.k() > 0 {
            // exp(0) = I exactly
            let mut u = vec![0.0; self.k()];
            u[0] = self.beta;
            return Ok(self.combine(&u));
        }
        Ok(self.combine(&self.projected(t)?))
    }

    /// `y_k'(t) = -V_k H_k exp(-t H_k) beta e_1`.
    pub fn eval_y_derivative(&self, t: f64) -> Result<Vec<f64>> {
        let u = self.projected(t)?;
        let hu = self.hessenberg().matvec(&u);
        let neg: Vec<f64> = hu.iter().map(|x| -x).collect();
        Ok(self.combine(&neg))
    }

    pub fn residual(&self, t: f64) -> Result<ResidualEval> {
        let u = self.projected(t)?;
        Ok(self.residual_from_projected(&u))
    }

    pub(crate) fn residual_from_projected(&self, u: &[f64]) -> ResidualEval {
        let psi = -self.h_next() * u[u.len() - 1];
        let w_norm = if self.invariant { 0.0 } else { 1.0 };
        ResidualEval {
            psi,
            w_norm,
            norm: psi.abs() * w_norm,
        }
    }

    /// `t |psi_k(t)|`.
    pub fn generalized_residual_norm(&self, t: f64) -> Result<f64> {
        Ok(t * self.residual(t)?.norm)
    }

    /// `||V_k^T r_k(t)||` with `r_k` assembled directly as `-A y_k - y_k'`.
    pub fn galerkin_defect(&self, op: &dyn LinearOperator, t: f64) -> Result<f64> {
        let r = direct_residual(op, &self.eval_y(t)?, &self.eval_y_derivative(t)?);
        let proj: Vec<f64> = self.basis.iter().map(|q| dot(q, &r)).collect();
        Ok(norm2(&proj))
    }
}

/// `-A y - y'`.
pub fn direct_residual(op: &dyn LinearOperator, y: &[f64], dy: &[f64]) -> Vec<f64> {
    let ay = apply_alloc(op, y);
    ay.iter().zip(dy).map(|(a, d)| -a - d).collect()
}

/// Free-function form of [`KrylovDecomposition::extend`].
pub fn arnoldi_extend(op: &dyn LinearOperator, decomp: &mut KrylovDecomposition, steps: usize) -> Result<usize> {
    decomp.extend(op, steps)
}

/// Both forms of the continued-Krylov error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuedErrorEstimate {
    /// `||u_{k+m}(t) - [u_k(t); 0]||`
    pub by_difference: f64,
    /// Norm of the solution of the projected error IVP driven by `psi_k(t) e_{k+1}`.
    pub by_ivp: f64,
    /// Extension actually achieved (smaller than requested at an invariant subspace).
    pub achieved: usize,
}

/// Estimates `||y(t) - y_k(t)||` by continuing the Arnoldi process `m` more steps.
pub fn continued_error_estimate(
    op: &dyn LinearOperator,
    decomp: &KrylovDecomposition,
    m: usize,
    t: f64,
) -> Result<ContinuedErrorEstimate> {
    decomp.require_nonempty()?;
    let k = decomp.k();
    let mut ext = decomp.clone();
    let achieved = if m == 0 || decomp.is_invariant() { 0 } else { ext.extend(op, m)? };
    if achieved == 0 {
        return Ok(ContinuedErrorEstimate {
            by_difference: 0.0,
            by_ivp: 0.0,
            achieved,
        });
    }
    let km = k + achieved;
    let uk = decomp.projected(t)?;
    let ukm = ext.projected(t)?;
    let diff: Vec<f64> = (0..km).map(|i| ukm[i] - if i < k { uk[i] } else { 0.0 }).collect();

    // z' = -G z with G = [[H_{k+m}, h e_{k+1} e_k^T], [0, H_k]], z(0) = [0; beta e_1]
    let h = decomp.h_next();
    let mut g = DenseMatrix::zeros(km + k, km + k);
    g.set_block(0, 0, &ext.hessenberg());
    g.set_block(km, km, &decomp.hessenberg());
    g[(k, km + k - 1)] = h;
    let e = expm_dense(&g, t)?;
    let err: Vec<f64> = (0..km).map(|i| decomp.beta() * e[(i, km)]).collect();
    Ok(ContinuedErrorEstimate {
        by_difference: norm2(&diff),
        by_ivp: norm2(&err),
        achieved,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopCriterion {
    /// `|psi_k(t_end)| <= tol ||v||`
    Residual,
    /// `t_end |psi_k(t_end)| <= tol ||v||`
    Generalized,
    /// `||y_k - y_{k-1}|| / ||y_k|| <= tol`
    Stagnation,
}

impl StopCriterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopCriterion::Residual => "residual",
            StopCriterion::Generalized => "generalized",
            StopCriterion::Stagnation => "stagnation",
        }
    }
}

impl std::str::FromStr for StopCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(Self::Residual),
            "generalized" => Ok(Self::Generalized),
            "stagnation" => Ok(Self::Stagnation),
            other => Err(Error::invalid(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ArnoldiOptions {
    pub tol: f64,
    pub restart: usize,
    pub criterion: StopCriterion,
    pub max_matvecs: usize,
    /// Up to this accumulated dimension the criterion is evaluated after every step;
    /// beyond it, on a schedule extrapolated from the last two evaluations.
    pub dense_check_limit: usize,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            restart: 100,
            criterion: StopCriterion::Residual,
            max_matvecs: 5000,
            dense_check_limit: 120,
        }
    }
}

struct Evaluation {
    crit: f64,
    residual: f64,
    z_cur: Vec<f64>,
}

/// Restarted Arnoldi with the accumulated block-Hessenberg matrix.
///
/// After each cycle of `restart` steps the new Hessenberg block is appended to
/// the accumulated matrix below the diagonal coupling `h e_1 e_m^T`, and the
/// process continues from `v_{m+1}`. Because the accumulated matrix is block
/// lower triangular, earlier blocks of `exp(-t H_acc) beta e_1` never change, so
/// only the current basis block is stored.
pub fn expv_restarted(
    a: &dyn LinearOperator,
    v: &[f64],
    t_end: f64,
    opts: &ArnoldiOptions,
    reference: Option<&[f64]>,
) -> Result<ExpvResult> {
    let n = a.dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    if opts.restart < 2 {
        return Err(Error::invalid("restart length must be at least 2"));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("t_end must be finite and non-negative"));
    }
    let beta = norm2(v);
    let counter = MatvecCounter::new();
    let op = Counted::new(a, &counter);
    let mut history = Vec::new();
    if beta == 0.0 || t_end == 0.0 {
        return Ok(ExpvResult {
            y: v.to_vec(),
            history,
            status: Status::Converged,
            stats: WorkStats::default(),
            warnings: Vec::new(),
        });
    }
    let symmetric = a.is_symmetric();
    let target = match opts.criterion {
        StopCriterion::Stagnation => opts.tol,
        _ => opts.tol * beta,
    };

    let mut hacc = DenseMatrix::zeros(0, 0);
    let mut coupling = 0.0;
    let mut y_acc = vec![0.0; n];
    let mut start = v.to_vec();
    let mut cycle = 0;
    let mut last_evals: Vec<(usize, f64)> = Vec::new();
    let mut next_eval = 0usize;

    loop {
        let mut decomp = KrylovDecomposition::new(&start, symmetric)?;
        let k_prev = hacc.rows();
        loop {
            if counter.get() >= opts.max_matvecs {
                let y = finalize(&y_acc, &decomp, k_prev, &hacc, coupling, beta, t_end)?;
                return Ok(done(y, history, Status::BudgetExhausted, &counter));
            }
            decomp.extend(&op, 1)?;
            let j = decomp.k();
            let kk = k_prev + j;
            let cycle_end = j == opts.restart || decomp.is_invariant() || j == n;
            let must = kk <= opts.dense_check_limit
                || cycle_end
                || kk >= next_eval
                || (opts.criterion == StopCriterion::Stagnation && j == 1);
            if !must {
                continue;
            }
            let ev = evaluate(&decomp, k_prev, &hacc, coupling, beta, t_end, opts.criterion, &y_acc)?;
            let y_now = if reference.is_some() || ev.crit <= target || decomp.is_invariant() {
                Some(assemble(&y_acc, &decomp, &ev.z_cur))
            } else {
                None
            };
            history.push(HistoryEntry {
                iter: kk,
                cycle,
                matvecs: counter.get(),
                inner_work: 0,
                residual_norm: ev.crit,
                error: y_now.as_ref().and_then(|y| rel_error(y, reference)),
            });
            if ev.crit <= target || decomp.is_invariant() || ev.residual == 0.0 {
                let y = y_now.unwrap_or_else(|| assemble(&y_acc, &decomp, &ev.z_cur));
                return Ok(done(y, history, Status::Converged, &counter));
            }
            next_eval = schedule(&mut last_evals, kk, ev.crit, target);
            if cycle_end {
                y_acc = assemble(&y_acc, &decomp, &ev.z_cur);
                hacc = accumulated(&decomp, k_prev, &hacc, coupling);
                coupling = decomp.h_next();
                start = decomp.v_next().to_vec();
                cycle += 1;
                break;
            }
        }
    }
}

fn done(y: Vec<f64>, history: Vec<HistoryEntry>, status: Status, counter: &MatvecCounter) -> ExpvResult {
    ExpvResult {
        y,
        history,
        status,
        stats: WorkStats {
            matvecs: counter.get(),
            ..Default::default()
        },
        warnings: Vec::new(),
    }
}

fn accumulated(decomp: &KrylovDecomposition, k_prev: usize, hacc: &DenseMatrix, coupling: f64) -> DenseMatrix {
    let j = decomp.k();
    let mut h = DenseMatrix::zeros(k_prev + j, k_prev + j);
    if k_prev > 0 {
        h.set_block(0, 0, hacc);
        h[(k_prev, k_prev - 1)] = coupling;
    }
    h.set_block(k_prev, k_prev, &decomp.hessenberg());
    h
}

/// Current-block part of `exp(-t H_acc) beta e_1` for the first `k_prev + len` rows.
fn current_block(
    decomp: &KrylovDecomposition,
    len: usize,
    k_prev: usize,
    hacc: &DenseMatrix,
    coupling: f64,
    beta: f64,
    t: f64,
) -> Result<Vec<f64>> {
    let full = accumulated(decomp, k_prev, hacc, coupling);
    let kk = k_prev + len;
    let e = expm_dense(&full.top_left(kk, kk), t)?;
    Ok((k_prev..kk).map(|i| beta * e[(i, 0)]).collect())
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    decomp: &KrylovDecomposition,
    k_prev: usize,
    hacc: &DenseMatrix,
    coupling: f64,
    beta: f64,
    t: f64,
    criterion: StopCriterion,
    y_acc: &[f64],
) -> Result<Evaluation> {
    let j = decomp.k();
    let z = current_block(decomp, j, k_prev, hacc, coupling, beta, t)?;
    let residual = (decomp.h_next() * z[j - 1]).abs();
    let crit = match criterion {
        StopCriterion::Residual => residual,
        StopCriterion::Generalized => t * residual,
        StopCriterion::Stagnation => {
            let zp = if j > 1 {
                current_block(decomp, j - 1, k_prev, hacc, coupling, beta, t)?
            } else {
                Vec::new()
            };
            let diff: Vec<f64> = (0..j).map(|i| z[i] - zp.get(i).copied().unwrap_or(0.0)).collect();
            let ynorm = norm2(&assemble(y_acc, decomp, &z));
            if ynorm > 0.0 {
                norm2(&diff) / ynorm
            } else {
                f64::INFINITY
            }
        }
    };
    Ok(Evaluation { crit, residual, z_cur: z })
}

fn assemble(y_acc: &[f64], decomp: &KrylovDecomposition, z: &[f64]) -> Vec<f64> {
    let mut y = y_acc.to_vec();
    for (c, q) in z.iter().zip(decomp.basis()) {
        axpy(*c, q, &mut y);
    }
    y
}

fn finalize(
    y_acc: &[f64],
    decomp: &KrylovDecomposition,
    k_prev: usize,
    hacc: &DenseMatrix,
    coupling: f64,
    beta: f64,
    t: f64,
) -> Result<Vec<f64>> {
    if decomp.k() == 0 {
        return Ok(y_acc.to_vec());
    }
    let z = current_block(decomp, decomp.k(), k_prev, hacc, coupling, beta, t)?;
    Ok(assemble(y_acc, decomp, &z))
}

/// Next accumulated dimension at which to evaluate the criterion.
fn schedule(evals: &mut Vec<(usize, f64)>, k: usize, crit: f64, target: f64) -> usize {
    evals.push((k, crit));
    let max_gap = (k / 25).max(4);
    if evals.len() < 2 {
        return k + 1;
    }
    let (k0, c0) = evals[evals.len() - 2];
    if k0 >= k || !(crit > 0.0) || !(c0 > 0.0) {
        return k + 1;
    }
    let rate = (c0.ln() - crit.ln()) / (k - k0) as f64;
    if rate <= 0.0 {
        return k + max_gap;
    }
    let needed = (crit.ln() - target.ln()) / rate;
    let gap = (0.5 * needed).floor().clamp(1.0, max_gap as f64) as usize;
    k + gap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::csr::CsrMatrix;
    use crate::operator::Identity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_is_invariant_after_one_step() {
        let mut d = KrylovDecomposition::new(&[1.0, 0.0, 0.0], false).unwrap();
        let done = d.extend(&Identity(3), 3).unwrap();
        assert_eq!(done, 1);
        assert!(d.is_invariant());
        assert_eq!(d.h_next(), 0.0);
        assert_eq!(d.hessenberg(), DenseMatrix::from_diag(&[1.0]));
        assert_eq!(d.residual(1.0).unwrap().norm, 0.0);
    }

    #[test]
    fn zero_start_rejected() {
        assert!(KrylovDecomposition::new(&[0.0, 0.0], false).is_err());
    }

    #[test]
    fn two_by_two_hand_computation() {
        let a = DenseMatrix::from_diag(&[2.0, 1.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut d = KrylovDecomposition::new(&[s, s], false).unwrap();
        d.extend(&a, 1).unwrap();
        assert!((d.hessenberg()[(0, 0)] - 1.5).abs() < 1e-15);
        assert!((d.h_next() - 0.5).abs() < 1e-15);
        let r = d.residual(1.0).unwrap();
        assert!((r.norm - 0.5 * (-1.5f64).exp()).abs() < 1e-15);
        assert!((r.norm - 0.11157).abs() < 1e-5);
        d.extend(&a, 1).unwrap();
        let h = d.hessenberg();
        let tr = h[(0, 0)] + h[(1, 1)];
        let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
        assert!((tr - 3.0).abs() < 1e-14 && (det - 2.0).abs() < 1e-14);
    }

    #[test]
    fn eval_at_zero_returns_v() {
        let a = random_dense(10, 1);
        let v: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
        let mut d = KrylovDecomposition::new(&v, false).unwrap();
        d.extend(&a, 4).unwrap();
        let y = d.eval_y(0.0).unwrap();
        assert!(crate::linalg::vector::rel_diff(&y, &v) < 1e-14);
    }

    #[test]
    fn arnoldi_relation_random() {
        let n = 30;
        let a = random_dense(n, 2);
        let v: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut d = KrylovDecomposition::new(&v, false).unwrap();
        d.extend(&a, 10).unwrap();
        let h = d.hessenberg();
        let mut worst = 0.0f64;
        for j in 0..10 {
            let mut r = apply_alloc(&a, &d.basis()[j]);
            for i in 0..10 {
                axpy(-h[(i, j)], &d.basis()[i], &mut r);
            }
            if j == 9 {
                axpy(-d.h_next(), d.v_next(), &mut r);
            }
            worst = worst.hypot(norm2(&r));
        }
        assert!(worst <= 1e-10 * a.norm_fro());
    }

    #[test]
    fn scaling_invariance() {
        let n = 20;
        let a = random_dense(n, 3);
        let a2 = a.scaled(2.0);
        let v = vec![1.0; n];
        let mut d1 = KrylovDecomposition::new(&v, false).unwrap();
        let mut d2 = KrylovDecomposition::new(&v, false).unwrap();
        d1.extend(&a, 6).unwrap();
        d2.extend(&a2, 6).unwrap();
        for (p, q) in d1.basis().iter().zip(d2.basis()) {
            assert!(crate::linalg::vector::rel_diff(p, q) < 1e-12);
        }
        let mut h = d1.hessenberg().scaled(2.0);
        h.add_scaled(-1.0, &d2.hessenberg());
        assert!(h.norm_fro() < 1e-12 * d2.hessenberg().norm_fro());
    }

    #[test]
    fn generalized_residual_ratio() {
        let a = random_dense(15, 4);
        let mut d = KrylovDecomposition::new(&vec![1.0; 15], false).unwrap();
        d.extend(&a, 5).unwrap();
        assert_eq!(d.generalized_residual_norm(0.0).unwrap(), 0.0);
        assert_eq!(d.generalized_residual_norm(1.0).unwrap(), d.residual(1.0).unwrap().norm);
        let r5 = d.residual(5.0).unwrap().norm;
        assert_eq!(d.generalized_residual_norm(5.0).unwrap(), 5.0 * r5);
    }

    #[test]
    fn lanczos_matches_arnoldi_on_symmetric() {
        let a = CsrMatrix::tridiag_const(40, -1.0, 2.0, -1.0);
        let v: Vec<f64> = (0..40).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
        let mut ar = KrylovDecomposition::new(&v, false).unwrap();
        let mut la = KrylovDecomposition::new(&v, true).unwrap();
        ar.extend(&a, 8).unwrap();
        la.extend(&a, 8).unwrap();
        let ya = ar.eval_y(0.7).unwrap();
        let yl = la.eval_y(0.7).unwrap();
        assert!(crate::linalg::vector::rel_diff(&yl, &ya) < 1e-12);
        let h = la.hessenberg();
        assert_eq!(h[(0, 3)], 0.0);
        assert_eq!(h[(1, 0)], h[(0, 1)]);
    }

    #[test]
    fn continued_estimate_forms_agree() {
        let n = 40;
        let b = random_dense(n, 6);
        let mut a = b.transpose().matmul(&b);
        a.add_identity(0.1);
        let v = vec![1.0; n];
        let mut d = KrylovDecomposition::new(&v, true).unwrap();
        d.extend(&a, 8).unwrap();
        let est = continued_error_estimate(&a, &d, 4, 1.0).unwrap();
        assert_eq!(est.achieved, 4);
        assert!((est.by_difference - est.by_ivp).abs() <= 1e-8 * est.by_difference.max(1e-300));
        let zero = continued_error_estimate(&a, &d, 0, 1.0).unwrap();
        assert_eq!(zero.by_difference, 0.0);
    }

    #[test]
    fn restarted_zero_matrix() {
        let a = CsrMatrix::zeros(5);
        let v = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let res = expv_restarted(&a, &v, 1.0, &ArnoldiOptions::default(), None).unwrap();
        assert!(res.converged());
        assert_eq!(res.stats.matvecs, 1);
        assert!(crate::linalg::vector::rel_diff(&res.y, &v) < 1e-15);
        assert_eq!(res.final_residual(), 0.0);
    }

    #[test]
    fn restart_matches_unrestarted_when_long_enough() {
        let n = 60;
        let a = CsrMatrix::tridiag_const(n, -1.0, 2.5, -0.8);
        let v = vec![1.0 / (n as f64).sqrt(); n];
        let opts = ArnoldiOptions {
            tol: 1e-10,
            restart: 60,
            ..Default::default()
        };
        let full = expv_restarted(&a, &v, 1.0, &opts, None).unwrap();
        let short = expv_restarted(
            &a,
            &v,
            1.0,
            &ArnoldiOptions {
                restart: 4,
                ..opts.clone()
            },
            None,
        )
        .unwrap();
        assert!(full.converged() && short.converged());
        assert!(crate::linalg::vector::rel_diff(&short.y, &full.y) < 1e-8);
        // matvecs increase by exactly one per Arnoldi step
        for w in full.history.windows(2) {
            assert_eq!(w[1].matvecs - w[0].matvecs, w[1].iter - w[0].iter);
        }
    }
}
