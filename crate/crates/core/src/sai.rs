//! Shift-and-invert Arnoldi: the Krylov space is built for `(I + gamma A)^{-1}`.
//!
//! With `(I + gA)^{-1} V_k = V_k Ht_k + ht v_{k+1} e_k^T` the projected matrix is
//! `H_k = (Ht_k^{-1} - I) / g` and the residual of `y_k = V_k exp(-t H_k) beta e_1` is
//! `psi(t) w` with `psi(t) = (ht / g) e_k^T Ht_k^{-1} u_k(t)` and `w = (I + gA) v_{k+1}`.

use std::cell::Cell;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arnoldi::KrylovDecomposition;
use crate::error::{Error, Result};
use crate::linalg::csr::CsrMatrix;
use crate::linalg::dense::{DenseLu, DenseMatrix};
use crate::linalg::expm::expm_dense;
use crate::linalg::gmres::{gmres, GmresOptions, Ssor};
use crate::linalg::sparse_lu::{sparse_lu, SparseLu};
use crate::linalg::vector::{axpy, norm2};
use crate::result::{rel_error, ExpvResult, HistoryEntry, Status, WorkStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerSolver {
    /// Sparse LU of `I + gamma A`, factored once.
    Lu,
    /// GMRES(100) with an SSOR preconditioner.
    Gmres,
}

impl InnerSolver {
    pub fn as_str(&self) -> &'static str {
        match self {
            InnerSolver::Lu => "lu",
            InnerSolver::Gmres => "gmres",
        }
    }
}

impl FromStr for InnerSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lu" => Ok(InnerSolver::Lu),
            "gmres" => Ok(InnerSolver::Gmres),
            _ => Err(Error::invalid(format!("unknown inner solver '{s}'"))),
        }
    }
}

enum Backend {
    Lu(SparseLu),
    Gmres { omega: f64, restart: usize },
}

/// Solves with `I + gamma A` and applies it, with work counters.
pub struct ShiftInvert<'a> {
    a: &'a CsrMatrix,
    shifted: CsrMatrix,
    gamma: f64,
    backend: Backend,
    solves: Cell<usize>,
    inner_iters: Cell<usize>,
    matvecs: Cell<usize>,
}

impl<'a> ShiftInvert<'a> {
    pub fn new(a: &'a CsrMatrix, gamma: f64, kind: InnerSolver) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("shift gamma must be positive"));
        }
        let shifted = a.shifted_identity(gamma);
        let backend = match kind {
            InnerSolver::Lu => Backend::Lu(sparse_lu(a, gamma)?),
            InnerSolver::Gmres => Backend::Gmres {
                omega: 1.0,
                restart: 100,
            },
        };
        Ok(Self {
            a,
            shifted,
            gamma,
            backend,
            solves: Cell::new(0),
            inner_iters: Cell::new(0),
            matvecs: Cell::new(0),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.a.n()
    }

    pub fn kind(&self) -> InnerSolver {
        match self.backend {
            Backend::Lu(_) => InnerSolver::Lu,
            Backend::Gmres { .. } => InnerSolver::Gmres,
        }
    }

    /// `x` with `(I + gamma A) x = b`; `rtol` only affects the iterative backend.
    pub fn solve(&self, b: &[f64], rtol: f64) -> Result<Vec<f64>> {
        self.solves.set(self.solves.get() + 1);
        match &self.backend {
            Backend::Lu(lu) => {
                self.inner_iters.set(self.inner_iters.get() + 1);
                lu.solve(b)
            }
            Backend::Gmres { omega, restart } => {
                let pre = Ssor::new(&self.shifted, *omega)?;
                let opts = GmresOptions {
                    rtol,
                    restart: *restart,
                    max_iter: 20 * restart,
                };
                match gmres(&self.shifted, b, &opts, Some(&pre)) {
                    Ok(sol) => {
                        self.inner_iters.set(self.inner_iters.get() + sol.iterations);
                        Ok(sol.x)
                    }
                    Err(Error::NotConverged { iterations, residual, .. }) => {
                        self.inner_iters.set(self.inner_iters.get() + iterations);
                        Err(Error::NotConverged {
                            iterations,
                            residual,
                            best: Box::new(Vec::new()),
                        })
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// `(I + gamma A) x`, counted as one matvec with `A`.
    pub fn apply_shifted(&self, x: &[f64]) -> Vec<f64> {
        self.matvecs.set(self.matvecs.get() + 1);
        let mut y = vec![0.0; x.len()];
        self.shifted.mul_into(x, &mut y);
        y
    }

    pub fn matrix(&self) -> &CsrMatrix {
        self.a
    }

    pub fn solves(&self) -> usize {
        self.solves.get()
    }

    /// LU solves, or GMRES iterations.
    pub fn inner_work(&self) -> usize {
        self.inner_iters.get()
    }

    pub fn matvecs(&self) -> usize {
        self.matvecs.get()
    }

    pub fn stats(&self) -> WorkStats {
        WorkStats {
            matvecs: self.matvecs(),
            inner_work: self.inner_work(),
            lu_factorizations: usize::from(matches!(self.backend, Backend::Lu(_))),
            solves: self.solves(),
        }
    }
}

/// Residual of the SaI approximation at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaiResidual {
    pub psi: f64,
    /// `||(I + gamma A) v_{k+1}||`
    pub w_norm: f64,
    pub norm: f64,
    /// `|psi| (1 + gamma ||A||)` when a norm estimate was supplied.
    pub bound: Option<f64>,
}

pub struct SaiDecomposition<'s, 'a> {
    inner: &'s ShiftInvert<'a>,
    krylov: KrylovDecomposition,
    w: Option<Vec<f64>>,
    lu: Option<(DenseLu, DenseMatrix)>,
    warnings: Vec<String>,
}

impl<'s, 'a> SaiDecomposition<'s, 'a> {
    pub fn new(inner: &'s ShiftInvert<'a>, v: &[f64]) -> Result<Self> {
        if v.len() != inner.dim() {
            return Err(Error::DimensionMismatch {
                expected: inner.dim(),
                got: v.len(),
            });
        }
        Ok(Self {
            inner,
            krylov: KrylovDecomposition::new(v, false)?,
            w: None,
            lu: None,
            warnings: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.krylov.k()
    }

    pub fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    pub fn beta(&self) -> f64 {
        self.krylov.beta()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        self.krylov.basis()
    }

    pub fn v_next(&self) -> &[f64] {
        self.krylov.v_next()
    }

    pub fn is_invariant(&self) -> bool {
        self.krylov.is_invariant()
    }

    pub fn h_tilde(&self) -> DenseMatrix {
        self.krylov.hessenberg()
    }

    pub fn h_tilde_next(&self) -> f64 {
        self.krylov.h_next()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Runs up to `steps` steps with inner solves at `inner_rtol`; returns the number performed.
    pub fn extend(&mut self, steps: usize, inner_rtol: f64) -> Result<usize> {
        if steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        let mut done = 0;
        while done < steps && !self.krylov.is_invariant() && self.krylov.k() < self.krylov.n() {
            let inner = self.inner;
            self.krylov.step_with(|v| inner.solve(v, inner_rtol))?;
            done += 1;
        }
        if done > 0 {
            self.w = None;
            self.lu = None;
            self.refresh()?;
        }
        Ok(done)
    }

    fn refresh(&mut self) -> Result<()> {
        let ht = self.h_tilde();
        let lu = ht.lu().map_err(|_| Error::Singular("projected inverse-operator matrix is singular".into()))?;
        let cond = lu.condition_estimate();
        if cond > 1e12 {
            self.warnings
                .push(format!("projected matrix ill-conditioned at k={} (cond ~ {cond:.1e})", self.k()));
        }
        let mut h = lu.inverse();
        h.add_identity(-1.0);
        h.scale_mut(1.0 / self.gamma());
        self.lu = Some((lu, h));
        if !self.krylov.is_invariant() {
            self.w = Some(self.inner.apply_shifted(self.krylov.v_next()));
        }
        Ok(())
    }

    fn parts(&self) -> Result<&(DenseLu, DenseMatrix)> {
        self.lu
            .as_ref()
            .ok_or_else(|| Error::invalid("decomposition has no basis vectors yet"))
    }

    /// The back-transformed projected matrix `(Ht^{-1} - I) / gamma`.
    pub fn hessenberg(&self) -> Result<DenseMatrix> {
        Ok(self.parts()?.1.clone())
    }

    /// `u_k(t) = exp(-t H_k) beta e_1`.
    pub fn projected(&self, t: f64) -> Result<Vec<f64>> {
        let (_, h) = self.parts()?;
        let e = expm_dense(h, t)?;
        Ok((0..self.k()).map(|i| self.beta() * e[(i, 0)]).collect())
    }

    fn combine(&self, c: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.inner.dim()];
        for (ci, q) in c.iter().zip(self.basis()) {
            axpy(*ci, q, &mut y);
        }
        y
    }

    pub fn eval_y(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.combine(&self.projected(t)?))
    }

    /// `-V_k H_k u_k(t)`.
    pub fn eval_y_derivative(&self, t: f64) -> Result<Vec<f64>> {
        let (_, h) = self.parts()?;
        let hu = h.matvec(&self.projected(t)?);
        Ok(self.combine(&hu.iter().map(|x| -x).collect::<Vec<_>>()))
    }

    /// The residual direction `(I + gamma A) v_{k+1}` (zero at an invariant subspace).
    pub fn direction(&self) -> Vec<f64> {
        self.w.clone().unwrap_or_else(|| vec![0.0; self.inner.dim()])
    }

    pub(crate) fn psi_from_projected(&self, u: &[f64]) -> Result<f64> {
        let (lu, _) = self.parts()?;
        let z = lu.solve(u);
        Ok(self.h_tilde_next() / self.gamma() * z[z.len() - 1])
    }

    pub fn residual(&self, t: f64, a_norm: Option<f64>) -> Result<SaiResidual> {
        let psi = self.psi_from_projected(&self.projected(t)?)?;
        let w_norm = self.w.as_deref().map_or(0.0, norm2);
        Ok(SaiResidual {
            psi,
            w_norm,
            norm: psi.abs() * w_norm,
            bound: a_norm.map(|an| psi.abs() * (1.0 + self.gamma() * an)),
        })
    }
}

/// Free-function form of [`SaiDecomposition::extend`].
pub fn sai_extend(decomp: &mut SaiDecomposition<'_, '_>, steps: usize, inner_rtol: f64) -> Result<usize> {
    decomp.extend(steps, inner_rtol)
}

pub fn sai_residual(decomp: &SaiDecomposition<'_, '_>, t: f64) -> Result<SaiResidual> {
    decomp.residual(t, None)
}

#[derive(Clone, Debug)]
pub struct SaiOptions {
    pub tol: f64,
    /// Defaults to `0.1 t_end`.
    pub gamma: Option<f64>,
    pub inner: InnerSolver,
    pub max_steps: usize,
    pub inner_floor: f64,
    pub inner_cap: f64,
}

impl Default for SaiOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            gamma: None,
            inner: InnerSolver::Lu,
            max_steps: 200,
            inner_floor: 1e-12,
            inner_cap: 1e-2,
        }
    }
}

/// Relaxed inner tolerance: loose once the outer residual is small.
pub(crate) fn relaxed_rtol(tol: f64, beta: f64, outer_residual: f64, floor: f64, cap: f64) -> f64 {
    let r = if outer_residual > 0.0 { 0.1 * tol * beta / outer_residual } else { cap };
    r.clamp(floor, cap)
}

pub(crate) fn default_gamma(t_end: f64) -> f64 {
    0.1 * t_end
}

/// `exp(-t_end A) v` by shift-and-invert Arnoldi with the residual stopping test.
pub fn sai_expv(
    a: &CsrMatrix,
    v: &[f64],
    t_end: f64,
    opts: &SaiOptions,
    reference: Option<&[f64]>,
) -> Result<ExpvResult> {
    if v.len() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: v.len(),
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("t_end must be finite and non-negative"));
    }
    let beta = norm2(v);
    if beta == 0.0 || t_end == 0.0 {
        return Ok(ExpvResult {
            y: v.to_vec(),
            history: Vec::new(),
            status: Status::Converged,
            stats: WorkStats::default(),
            warnings: Vec::new(),
        });
    }
    let gamma = opts.gamma.unwrap_or_else(|| default_gamma(t_end));
    let inner = ShiftInvert::new(a, gamma, opts.inner)?;
    let mut decomp = SaiDecomposition::new(&inner, v)?;
    let mut history = Vec::new();
    let mut resid = beta;
    let status = loop {
        if decomp.k() >= opts.max_steps {
            break Status::BudgetExhausted;
        }
        let rtol = relaxed_rtol(opts.tol, beta, resid, opts.inner_floor, opts.inner_cap);
        decomp.extend(1, rtol)?;
        resid = decomp.residual(t_end, None)?.norm;
        let y_err = match reference {
            Some(r) => rel_error(&decomp.eval_y(t_end)?, Some(r)),
            None => None,
        };
        history.push(HistoryEntry {
            iter: decomp.k(),
            cycle: 0,
            matvecs: inner.matvecs(),
            inner_work: inner.inner_work(),
            residual_norm: resid,
            error: y_err,
        });
        if !resid.is_finite() {
            return Err(Error::Divergence("SaI residual is not finite".into()));
        }
        if resid <= opts.tol * beta || decomp.is_invariant() {
            break Status::Converged;
        }
        if decomp.k() >= a.n() {
            break Status::Breakdown;
        }
    };
    let y = decomp.eval_y(t_end)?;
    Ok(ExpvResult {
        y,
        history,
        status,
        stats: inner.stats(),
        warnings: decomp.warnings().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arnoldi::direct_residual;
    use crate::linalg::expm::expm_dense;
    use crate::linalg::vector::{dot, rel_diff};
    use crate::problems::{conv_diff_2d, default_v, ConvDiffSpec};

    fn dense_reference(a: &CsrMatrix, v: &[f64], t: f64) -> Vec<f64> {
        expm_dense(&a.to_dense(), t).unwrap().matvec(v)
    }

    #[test]
    fn zero_matrix_is_one_step() {
        let a = CsrMatrix::zeros(4);
        let v = vec![1.0, 2.0, 3.0, 4.0];
        let r = sai_expv(&a, &v, 1.0, &SaiOptions::default(), None).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert_eq!(r.history.len(), 1);
        assert!(rel_diff(&r.y, &v) < 1e-15);
    }

    #[test]
    fn two_by_two_back_transform() {
        let a = CsrMatrix::from_diag(&[1.0, 3.0]);
        let inner = ShiftInvert::new(&a, 0.5, InnerSolver::Lu).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let mut d = SaiDecomposition::new(&inner, &[s, s]).unwrap();
        d.extend(2, 1e-12).unwrap();
        let ht = d.h_tilde();
        let (tr, det) = (ht[(0, 0)] + ht[(1, 1)], ht[(0, 0)] * ht[(1, 1)] - ht[(0, 1)] * ht[(1, 0)]);
        assert!((tr - (1.0 / 1.5 + 1.0 / 2.5)).abs() < 1e-14);
        assert!((det - 1.0 / (1.5 * 2.5)).abs() < 1e-14);
        let h = d.hessenberg().unwrap();
        let (tr, det) = (h[(0, 0)] + h[(1, 1)], h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)]);
        assert!((tr - 4.0).abs() < 1e-12 && (det - 3.0).abs() < 1e-12);
    }

    #[test]
    fn residual_matches_direct_assembly() {
        let a = conv_diff_2d(&ConvDiffSpec::new(6, 10.0)).unwrap();
        let v = default_v(a.n());
        let inner = ShiftInvert::new(&a, 0.1, InnerSolver::Lu).unwrap();
        let mut d = SaiDecomposition::new(&inner, &v).unwrap();
        d.extend(5, 1e-12).unwrap();
        for t in [0.5, 1.0] {
            let r = d.residual(t, Some(a.norm1())).unwrap();
            let direct = direct_residual(&a, &d.eval_y(t).unwrap(), &d.eval_y_derivative(t).unwrap());
            assert!((norm2(&direct) - r.norm).abs() <= 1e-9 * r.norm, "t={t}");
            assert!(r.norm <= r.bound.unwrap() * (1.0 + 1e-12));
        }
        let vn = d.v_next().to_vec();
        for q in d.basis() {
            assert!(dot(q, &vn).abs() < 1e-10);
        }
    }

    #[test]
    fn relation_holds_with_lu() {
        let a = conv_diff_2d(&ConvDiffSpec::new(20, 0.0)).unwrap();
        let v = default_v(a.n());
        let inner = ShiftInvert::new(&a, 0.1, InnerSolver::Lu).unwrap();
        let mut d = SaiDecomposition::new(&inner, &v).unwrap();
        d.extend(8, 1e-12).unwrap();
        let ht = d.h_tilde();
        let k = d.k();
        let lu = sparse_lu(&a, 0.1).unwrap();
        for j in 0..k {
            let mut lhs = lu.solve(&d.basis()[j]).unwrap();
            for i in 0..k {
                axpy(-ht[(i, j)], &d.basis()[i], &mut lhs);
            }
            if j == k - 1 {
                axpy(-d.h_tilde_next(), d.v_next(), &mut lhs);
            }
            assert!(norm2(&lhs) <= 1e-10, "column {j}");
        }
    }

    #[test]
    fn converges_to_dense_reference() {
        let a = conv_diff_2d(&ConvDiffSpec::new(20, 0.0)).unwrap();
        let v = default_v(a.n());
        let reference = dense_reference(&a, &v, 1.0);
        for inner in [InnerSolver::Lu, InnerSolver::Gmres] {
            let opts = SaiOptions { inner, ..Default::default() };
            let r = sai_expv(&a, &v, 1.0, &opts, Some(&reference)).unwrap();
            assert!(r.converged());
            assert!(rel_diff(&r.y, &reference) <= 1e-7, "{inner:?}");
        }
    }

    #[test]
    fn relaxed_tolerance_grows_as_residual_falls() {
        let t1 = relaxed_rtol(1e-8, 1.0, 1.0, 1e-12, 1e-2);
        let t2 = relaxed_rtol(1e-8, 1.0, 1e-6, 1e-12, 1e-2);
        assert!(t1 < t2);
        assert_eq!(relaxed_rtol(1e-8, 1.0, 1e-12, 1e-12, 1e-2), 1e-2);
    }

    #[test]
    fn inner_solver_names() {
        for s in ["lu", "gmres"] {
            assert_eq!(s.parse::<InnerSolver>().unwrap().as_str(), s);
        }
        assert!("cg".parse::<InnerSolver>().is_err());
    }
}
