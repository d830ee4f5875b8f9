//! Run configuration: a flat key = value file (TOML syntax) or command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arnoldi::StopCriterion;
use crate::error::{Error, Result};
use crate::sai::InnerSolver;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    /// 2D convection-diffusion, `nx^2` unknowns.
    #[serde(alias = "convdiff")]
    Convdiff2d,
    /// `diag(linspace(-1, 1, n))`, optionally with a unit superdiagonal.
    Diag,
    /// Periodic 3D Laplacian, `nx^3` unknowns.
    Laplace3d,
    /// `tridiag(lower, diag, upper)` of size `n`.
    Tridiag,
    /// A Matrix Market file.
    Mtx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Method {
    Arnoldi,
    Sai,
    Chebyshev,
    Richardson,
    KrylovRichardson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    None,
    /// Dense `expm` (small `n` only).
    Dense,
    /// Dense when `n <= 500`, otherwise a tight-tolerance Krylov run.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    Tridiag,
    Diag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    Plain,
    Gershgorin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrOperator {
    Plain,
    Sai,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub nx: usize,
    pub pe: f64,
    pub n: usize,
    pub nonnormal: bool,
    pub lower: f64,
    pub diag: f64,
    pub upper: f64,
    /// Shape parameter of the 3D initial vector.
    pub shape: f64,
    pub matrix: Option<PathBuf>,
    pub method: Method,
    pub t_end: f64,
    pub tol: f64,
    /// Restart length (Arnoldi) or cycle length (Krylov-Richardson).
    pub restart: usize,
    pub criterion: StopCriterion,
    pub gamma: Option<f64>,
    pub inner: InnerSolver,
    pub kr_operator: KrOperator,
    /// Iteration budget; its unit is the method's iteration.
    pub max_iter: usize,
    pub samples: usize,
    pub splitting: Splitting,
    pub scaling: Scaling,
    pub seed: u64,
    pub reference: ReferenceKind,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Convdiff2d,
            nx: 20,
            pe: 0.0,
            n: 1000,
            nonnormal: false,
            lower: -1.0,
            diag: 2.0,
            upper: -1.0,
            shape: 1.0,
            matrix: None,
            method: Method::Arnoldi,
            t_end: 1.0,
            tol: 1e-8,
            restart: 100,
            criterion: StopCriterion::Residual,
            gamma: None,
            inner: InnerSolver::Lu,
            kr_operator: KrOperator::Plain,
            max_iter: 5000,
            samples: 20,
            splitting: Splitting::Tridiag,
            scaling: Scaling::Gershgorin,
            seed: 0,
            reference: ReferenceKind::None,
            output: None,
        }
    }
}

fn config_error(e: impl fmt::Display) -> Error {
    let msg = e.to_string();
    Error::Parse {
        line: line_of(&msg),
        msg: msg.lines().last().unwrap_or_default().trim().to_string(),
    }
}

// toml reports positions as "line N, column M"
fn line_of(msg: &str) -> usize {
    msg.split("line ")
        .nth(1)
        .and_then(|s| s.split(|c: char| !c.is_ascii_digit()).next())
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = toml::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&s)
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    /// Sets one key from its textual value, as a line `key = value` would.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table = toml::Table::try_from(&*self).map_err(config_error)?;
        let parsed = parse_value(value);
        table.insert(key.to_string(), parsed);
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::invalid(format!("{key}: {}", e.message())))?;
        *self = cfg;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return bad("tol must lie in (0, 1)");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be finite and non-negative");
        }
        if self.restart < 2 {
            return bad("restart must be at least 2");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if self.samples < 2 {
            return bad("samples must be at least 2");
        }
        if matches!(self.gamma, Some(g) if !(g > 0.0)) {
            return bad("gamma must be positive");
        }
        match self.problem {
            ProblemKind::Convdiff2d | ProblemKind::Laplace3d if self.nx < 4 => bad("nx must be at least 4"),
            ProblemKind::Diag | ProblemKind::Tridiag if self.n == 0 => bad("n must be positive"),
            ProblemKind::Mtx if self.matrix.is_none() => bad("problem mtx needs matrix = <path>"),
            _ => Ok(()),
        }
    }

    /// Stable name of the operator and start vector, used to share references.
    pub fn problem_key(&self) -> String {
        match self.problem {
            ProblemKind::Convdiff2d => format!("convdiff2d nx={} pe={}", self.nx, self.pe),
            ProblemKind::Diag => format!("diag n={} nonnormal={} seed={}", self.n, self.nonnormal, self.seed),
            ProblemKind::Laplace3d => format!("laplace3d nx={} shape={}", self.nx, self.shape),
            ProblemKind::Tridiag => format!("tridiag n={} ({}, {}, {})", self.n, self.lower, self.diag, self.upper),
            ProblemKind::Mtx => format!("mtx {}", self.matrix.as_deref().unwrap_or(Path::new("")).display()),
        }
    }
}

// Bare words become strings so that `method = arnoldi` works without quotes.
fn parse_value(value: &str) -> toml::Value {
    let v = value.trim();
    match toml::from_str::<toml::Table>(&format!("x = {v}")) {
        Ok(mut t) => t.remove("x").unwrap_or_else(|| toml::Value::String(v.to_string())),
        Err(_) => toml::Value::String(v.to_string()),
    }
}

/// Parses a file whose values may be bare words.
pub fn parse_lenient(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected key = value".into(),
        })?;
        cfg.set(k.trim(), v).map_err(|e| Error::Parse {
            line: i + 1,
            msg: match e {
                Error::Parse { msg, .. } => msg,
                other => other.to_string(),
            },
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}
