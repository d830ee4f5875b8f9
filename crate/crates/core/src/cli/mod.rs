//! The `resexp` command line.
//!
//! Exit codes: 0 converged, 2 budget exhausted, 3 invalid input, 4 numerical failure.

pub mod config;
pub mod report;
pub mod run;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::linalg::mmio::write_matrix_market_file;
use crate::linalg::tridiag::Tridiagonal;
use crate::richardson::richardson_contraction_bound;

use config::{parse_lenient, Method, ReferenceKind, RunConfig, Splitting};
use report::{compare_table, exit_code, summary_line, write_compare_csv, write_history, CompareRow};
use run::{build_problem, method_label, reference, run_method};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "resexp", version, about = "Residual-controlled exp(-tA)v solvers")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one method and write its convergence history as CSV.
    Run(ConfigArgs),
    /// Run several methods or config files on shared references and tabulate them.
    Compare {
        /// Config files, one run each.
        configs: Vec<PathBuf>,
        /// Comma-separated methods applied to the base config.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[command(flatten)]
        base: ConfigArgs,
    },
    /// Tabulate the exponential and linear Richardson contraction bounds.
    Bound {
        /// Largest time on the grid (defaults to t_end).
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[command(flatten)]
        base: ConfigArgs,
    },
    /// Write the problem matrix in Matrix Market format.
    Export(ConfigArgs),
    /// Print the effective configuration.
    ShowConfig(ConfigArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// key = value file; flags override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Any config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    nx: Option<String>,
    #[arg(long)]
    pe: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long = "t-end")]
    t_end: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    restart: Option<String>,
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long)]
    inner: Option<String>,
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, short)]
    output: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => parse_lenient(&std::fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("problem", &self.problem),
            ("method", &self.method),
            ("nx", &self.nx),
            ("pe", &self.pe),
            ("n", &self.n),
            ("t_end", &self.t_end),
            ("tol", &self.tol),
            ("restart", &self.restart),
            ("criterion", &self.criterion),
            ("inner", &self.inner),
            ("reference", &self.reference),
            ("output", &self.output),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::Singular(_) | Error::Divergence(_) | Error::NotConverged { .. } | Error::Integrator { .. } => {
            EXIT_NUMERICAL
        }
        _ => EXIT_INVALID,
    }
}

fn open_output<'a>(path: Option<&PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdout),
    })
}

fn cmd_run(args: &ConfigArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let cfg = args.resolve()?;
    let p = build_problem(&cfg)?;
    let r = reference(&cfg, &p)?;
    let res = run_method(&cfg, &p, r.as_deref())?;
    let to_file = cfg.output.is_some();
    {
        let mut w = open_output(cfg.output.as_ref(), out)?;
        write_history(&res, r.is_some(), &mut w)?;
        w.flush()?;
    }
    let summary = summary_line(&method_label(&cfg), &res);
    if to_file {
        writeln!(out, "{summary}")?;
    } else {
        writeln!(err, "{summary}")?;
    }
    for w in &res.warnings {
        writeln!(err, "warning: {w}")?;
    }
    Ok(exit_code(res.status))
}

fn cmd_compare(
    configs: &[PathBuf],
    methods: &[Method],
    base: &ConfigArgs,
    out: &mut dyn Write,
) -> Result<i32> {
    let mut jobs = Vec::new();
    for path in configs {
        let args = ConfigArgs {
            config: Some(path.clone()),
            ..base.clone()
        };
        jobs.push(args.resolve()?);
    }
    if !methods.is_empty() {
        let cfg = base.resolve()?;
        for &m in methods {
            jobs.push(RunConfig { method: m, ..cfg.clone() });
        }
    }
    if jobs.is_empty() {
        return Err(Error::invalid("compare needs config files or --methods"));
    }

    // one reference per distinct problem and time, accurate enough for the tightest run
    let mut groups: BTreeMap<String, RunConfig> = BTreeMap::new();
    for j in &jobs {
        let key = format!("{} t={}", j.problem_key(), j.t_end);
        let entry = groups.entry(key).or_insert_with(|| j.clone());
        entry.tol = entry.tol.min(j.tol);
        if entry.reference == ReferenceKind::None {
            entry.reference = ReferenceKind::Auto;
        }
    }
    let prepared: BTreeMap<String, Result<(run::Problem, Option<Vec<f64>>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = groups
            .iter()
            .map(|(k, cfg)| {
                (
                    k.clone(),
                    s.spawn(move || {
                        let p = build_problem(cfg)?;
                        let r = reference(cfg, &p)?;
                        Ok((p, r))
                    }),
                )
            })
            .collect();
        handles
            .into_iter()
            .map(|(k, h)| (k, h.join().expect("reference thread panicked")))
            .collect()
    });

    let rows: Vec<CompareRow> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|cfg| {
                let key = format!("{} t={}", cfg.problem_key(), cfg.t_end);
                let prep = &prepared[&key];
                s.spawn(move || CompareRow {
                    problem: key.clone(),
                    method: method_label(cfg),
                    outcome: match prep {
                        Ok((p, r)) => run_method(cfg, p, r.as_deref()).map_err(|e| e.to_string()),
                        Err(e) => Err(format!("setup: {e}")),
                    },
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });

    out.write_all(compare_table(&rows).as_bytes())?;
    if let Some(path) = &base.resolve()?.output {
        write_compare_csv(&rows, BufWriter::new(File::create(path)?))?;
    }
    let code = rows
        .iter()
        .map(|r| match &r.outcome {
            Ok(res) => exit_code(res.status),
            Err(_) => EXIT_NUMERICAL,
        })
        .max()
        .unwrap_or(EXIT_OK);
    Ok(code)
}

fn cmd_bound(t_max: Option<f64>, points: usize, base: &ConfigArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = base.resolve()?;
    if points < 2 {
        return Err(Error::invalid("points must be at least 2"));
    }
    let t_max = t_max.unwrap_or(cfg.t_end);
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid("t_max must be positive"));
    }
    let p = build_problem(&cfg)?;
    let m = match cfg.splitting {
        Splitting::Tridiag => Tridiagonal::from_csr(&p.a),
        Splitting::Diag => Tridiagonal::diagonal_of(&p.a),
    };
    let grid: Vec<f64> = (0..points).map(|i| t_max * i as f64 / (points - 1) as f64).collect();
    let curve = richardson_contraction_bound(&p.a, &m.to_csr(), &grid)?;
    let mut w = open_output(cfg.output.as_ref(), out)?;
    let mut csv = csv::Writer::from_writer(&mut w);
    let io = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    csv.write_record(["t", "exponential", "linear"]).map_err(io)?;
    for (t, e) in curve.t.iter().zip(&curve.exponential) {
        csv.write_record([format!("{t:.6e}"), format!("{e:.6e}"), format!("{:.6e}", curve.linear)])
            .map_err(io)?;
    }
    csv.flush()?;
    Ok(EXIT_OK)
}

fn cmd_export(args: &ConfigArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = args.resolve()?;
    let path = cfg.output.clone().ok_or_else(|| Error::invalid("export needs --output"))?;
    let p = build_problem(&cfg)?;
    write_matrix_market_file(&p.a, &path)?;
    writeln!(out, "wrote {} ({} x {}, {} nonzeros)", path.display(), p.a.n(), p.a.n(), p.a.nnz())?;
    Ok(EXIT_OK)
}

/// Runs the command line on `args` (including the program name) and returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.cmd {
        Command::Run(a) => cmd_run(a, out, err),
        Command::Compare { configs, methods, base } => cmd_compare(configs, methods, base, out),
        Command::Bound { t_max, points, base } => cmd_bound(*t_max, *points, base, out),
        Command::Export(a) => cmd_export(a, out),
        Command::ShowConfig(a) => a.resolve().and_then(|c| {
            write!(out, "{c}")?;
            Ok(EXIT_OK)
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            error_code(&e)
        }
    }
}
