//! Outcome of an `exp(-tA) v` computation.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    BudgetExhausted,
    Breakdown,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::BudgetExhausted => "budget_exhausted",
            Status::Breakdown => "breakdown",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the convergence history.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryEntry {
    pub iter: usize,
    pub cycle: usize,
    /// Cumulative matvecs with `A`.
    pub matvecs: usize,
    /// Cumulative inner work: LU solves or GMRES iterations (SaI), integrator steps (Richardson).
    pub inner_work: usize,
    /// The stopping quantity at `t_end`.
    pub residual_norm: f64,
    /// `||y_k - y_ref|| / ||y_ref||` when a reference was supplied.
    pub error: Option<f64>,
}

/// Counters mirroring the work columns of the benchmark tables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorkStats {
    pub matvecs: usize,
    pub inner_work: usize,
    pub lu_factorizations: usize,
    pub solves: usize,
}

#[derive(Clone, Debug)]
pub struct ExpvResult {
    pub y: Vec<f64>,
    pub history: Vec<HistoryEntry>,
    pub status: Status,
    pub stats: WorkStats,
    pub warnings: Vec<String>,
}

impl ExpvResult {
    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |h| h.residual_norm)
    }

    pub fn iterations(&self) -> usize {
        self.history.last().map_or(0, |h| h.iter)
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// Relative error against an optional reference.
pub(crate) fn rel_error(y: &[f64], reference: Option<&[f64]>) -> Option<f64> {
    reference.map(|r| crate::linalg::vector::rel_diff(y, r))
}
