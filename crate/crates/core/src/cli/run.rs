//! Problem construction and method dispatch for the command line.

use crate::arnoldi::{expv_restarted, ArnoldiOptions, StopCriterion};
use crate::chebyshev::{cheb_expv, ChebOptions, SpectrumScaling};
use crate::error::{Error, Result};
use crate::krylov_richardson::{kr_expv, KrMode, KrOptions};
use crate::linalg::csr::CsrMatrix;
use crate::linalg::expm::expm_dense;
use crate::linalg::mmio::read_matrix_market_file;
use crate::linalg::tridiag::Tridiagonal;
use crate::problems::{conv_diff_2d, default_v, diag_test, initial_vector, laplacian_3d_periodic, ConvDiffSpec};
use crate::result::ExpvResult;
use crate::richardson::{exp_richardson, RichardsonOptions};
use crate::sai::{sai_expv, SaiOptions};

use super::config::{KrOperator, Method, ProblemKind, ReferenceKind, RunConfig, Scaling, Splitting};

/// Largest dimension for which a dense reference is formed.
pub const DENSE_REFERENCE_LIMIT: usize = 500;

pub struct Problem {
    pub a: CsrMatrix,
    pub v: Vec<f64>,
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let (a, v) = match cfg.problem {
        ProblemKind::Convdiff2d => {
            let a = conv_diff_2d(&ConvDiffSpec::new(cfg.nx, cfg.pe))?;
            let v = default_v(a.n());
            (a, v)
        }
        ProblemKind::Diag => diag_test(cfg.n, cfg.nonnormal, cfg.seed)?,
        ProblemKind::Laplace3d => (laplacian_3d_periodic(cfg.nx)?, initial_vector(cfg.nx, cfg.shape)),
        ProblemKind::Tridiag => (
            CsrMatrix::tridiag_const(cfg.n, cfg.lower, cfg.diag, cfg.upper),
            default_v(cfg.n),
        ),
        ProblemKind::Mtx => {
            let path = cfg.matrix.as_ref().ok_or_else(|| Error::invalid("problem mtx needs a matrix path"))?;
            let a = read_matrix_market_file(path)?;
            let v = default_v(a.n());
            (a, v)
        }
    };
    Ok(Problem { a, v })
}

pub fn dense_reference(p: &Problem, t_end: f64) -> Result<Vec<f64>> {
    Ok(expm_dense(&p.a.to_dense(), t_end)?.matvec(&p.v))
}

/// Computes `exp(-t A) v` to well below `tol`, or `None` when no reference was asked for.
pub fn reference(cfg: &RunConfig, p: &Problem) -> Result<Option<Vec<f64>>> {
    let n = p.a.n();
    match cfg.reference {
        ReferenceKind::None => Ok(None),
        ReferenceKind::Dense if n > DENSE_REFERENCE_LIMIT => Err(Error::invalid(format!(
            "dense reference needs n <= {DENSE_REFERENCE_LIMIT}, got {n}"
        ))),
        ReferenceKind::Dense => dense_reference(p, cfg.t_end).map(Some),
        ReferenceKind::Auto if n <= DENSE_REFERENCE_LIMIT => dense_reference(p, cfg.t_end).map(Some),
        ReferenceKind::Auto => {
            let opts = ArnoldiOptions {
                tol: (cfg.tol * 1e-3).max(1e-12),
                restart: 100,
                criterion: StopCriterion::Residual,
                max_matvecs: 50_000,
                ..Default::default()
            };
            let r = expv_restarted(&p.a, &p.v, cfg.t_end, &opts, None)?;
            if !r.converged() {
                return Err(Error::NotConverged {
                    iterations: r.iterations(),
                    residual: r.final_residual(),
                    best: Box::new(r.y),
                });
            }
            Ok(Some(r.y))
        }
    }
}

pub fn run_method(cfg: &RunConfig, p: &Problem, reference: Option<&[f64]>) -> Result<ExpvResult> {
    let (a, v, t) = (&p.a, p.v.as_slice(), cfg.t_end);
    match cfg.method {
        Method::Arnoldi => {
            let opts = ArnoldiOptions {
                tol: cfg.tol,
                restart: cfg.restart,
                criterion: cfg.criterion,
                max_matvecs: cfg.max_iter,
                ..Default::default()
            };
            expv_restarted(a, v, t, &opts, reference)
        }
        Method::Sai => {
            let opts = SaiOptions {
                tol: cfg.tol,
                gamma: cfg.gamma,
                inner: cfg.inner,
                max_steps: cfg.max_iter,
                ..Default::default()
            };
            sai_expv(a, v, t, &opts, reference)
        }
        Method::Chebyshev => {
            let scaling = match cfg.scaling {
                Scaling::Plain => SpectrumScaling::Plain,
                Scaling::Gershgorin => SpectrumScaling::gershgorin(a),
            };
            let opts = ChebOptions {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                scaling,
                ..Default::default()
            };
            cheb_expv(a, v, t, &opts, reference)
        }
        Method::Richardson => {
            let m = match cfg.splitting {
                Splitting::Tridiag => Tridiagonal::from_csr(a),
                Splitting::Diag => Tridiagonal::diagonal_of(a),
            };
            let opts = RichardsonOptions {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                n_samples: cfg.samples,
                ..Default::default()
            };
            exp_richardson(a, &m, v, t, &opts, reference)
        }
        Method::KrylovRichardson => {
            let mode = match cfg.kr_operator {
                KrOperator::Plain => KrMode::Plain,
                KrOperator::Sai => KrMode::Sai {
                    gamma: cfg.gamma,
                    inner: cfg.inner,
                },
            };
            let opts = KrOptions {
                tol: cfg.tol,
                cycle_len: cfg.restart,
                mode,
                max_steps: cfg.max_iter,
                ..Default::default()
            };
            kr_expv(a, v, t, &opts, reference)
        }
    }
}

/// Short label for tables, e.g. `arnoldi(100)` or `sai/gmres`.
pub fn method_label(cfg: &RunConfig) -> String {
    match cfg.method {
        Method::Arnoldi => format!("arnoldi({})/{}", cfg.restart, cfg.criterion.as_str()),
        Method::Sai => format!("sai/{}", cfg.inner.as_str()),
        Method::Chebyshev => "chebyshev".into(),
        Method::Richardson => format!(
            "richardson/{}",
            match cfg.splitting {
                Splitting::Tridiag => "tridiag",
                Splitting::Diag => "diag",
            }
        ),
        Method::KrylovRichardson => match cfg.kr_operator {
            KrOperator::Plain => format!("kr({})", cfg.restart),
            KrOperator::Sai => format!("kr-sai({})/{}", cfg.restart, cfg.inner.as_str()),
        },
    }
}
