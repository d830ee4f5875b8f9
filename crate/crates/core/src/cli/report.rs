//! Convergence histories as CSV and one-line summaries.

use std::io::Write;

use crate::error::{Error, Result};
use crate::result::{ExpvResult, Status};

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.6e}")
}

/// Writes `iter,matvecs,inner_work,residual_norm[,error_vs_reference]`.
pub fn write_history<W: Write>(res: &ExpvResult, with_error: bool, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["iter", "matvecs", "inner_work", "residual_norm"];
    if with_error {
        header.push("error_vs_reference");
    }
    out.write_record(&header).map_err(csv_error)?;
    for h in &res.history {
        let mut rec = vec![
            h.iter.to_string(),
            h.matvecs.to_string(),
            h.inner_work.to_string(),
            fmt_f(h.residual_norm),
        ];
        if with_error {
            rec.push(h.error.map_or_else(String::new, fmt_f));
        }
        out.write_record(&rec).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn final_error(res: &ExpvResult) -> Option<f64> {
    res.history.last().and_then(|h| h.error)
}

pub fn summary_line(label: &str, res: &ExpvResult) -> String {
    let s = &res.stats;
    let mut line = format!(
        "{label}: status={} iterations={} matvecs={} inner_work={} lu={} solves={} residual={:.3e}",
        res.status,
        res.iterations(),
        s.matvecs,
        s.inner_work,
        s.lu_factorizations,
        s.solves,
        res.final_residual()
    );
    if let Some(e) = final_error(res) {
        line.push_str(&format!(" error={e:.3e}"));
    }
    line
}

pub struct CompareRow {
    pub problem: String,
    pub method: String,
    pub outcome: std::result::Result<ExpvResult, String>,
}

const COMPARE_HEADER: [&str; 9] = [
    "problem", "method", "status", "iterations", "matvecs", "inner_work", "lu", "residual", "error",
];

fn row_fields(r: &CompareRow) -> Vec<String> {
    let mut f = vec![r.problem.clone(), r.method.clone()];
    match &r.outcome {
        Ok(res) => {
            let s = &res.stats;
            f.extend([
                res.status.to_string(),
                res.iterations().to_string(),
                s.matvecs.to_string(),
                s.inner_work.to_string(),
                s.lu_factorizations.to_string(),
                format!("{:.3e}", res.final_residual()),
                final_error(res).map_or_else(|| "-".into(), |e| format!("{e:.3e}")),
            ]);
        }
        Err(msg) => {
            f.push(format!("failed: {msg}"));
            f.extend(std::iter::repeat("-".to_string()).take(6));
        }
    }
    f
}

/// Column-aligned text table.
pub fn compare_table(rows: &[CompareRow]) -> String {
    let body: Vec<Vec<String>> = rows.iter().map(row_fields).collect();
    let mut width: Vec<usize> = COMPARE_HEADER.iter().map(|h| h.len()).collect();
    for r in &body {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = line(COMPARE_HEADER.to_vec());
    out.push('\n');
    for r in &body {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COMPARE_HEADER).map_err(csv_error)?;
    for r in rows {
        out.write_record(row_fields(r)).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Process exit code for a finished run.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Converged => 0,
        Status::BudgetExhausted => 2,
        Status::Breakdown => 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::result::{HistoryEntry, WorkStats};

    fn sample() -> ExpvResult {
        let entry = |iter, res, err| HistoryEntry {
            iter,
            cycle: 0,
            matvecs: iter,
            inner_work: 0,
            residual_norm: res,
            error: err,
        };
        ExpvResult {
            y: vec![1.0],
            history: vec![entry(1, 0.5, Some(0.1)), entry(2, 1e-9, Some(2e-10))],
            status: Status::Converged,
            stats: WorkStats { matvecs: 2, ..Default::default() },
            warnings: vec![],
        }
    }

    #[test]
    fn history_csv() {
        let mut buf = Vec::new();
        write_history(&sample(), true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,matvecs,inner_work,residual_norm,error_vs_reference"));
        assert_eq!(lines.next(), Some("1,1,0,5.000000e-1,1.000000e-1"));
        assert_eq!(text.lines().count(), 3);

        let mut buf = Vec::new();
        write_history(&sample(), false, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iter,matvecs,inner_work,residual_norm\n"));
    }

    #[test]
    fn summary_mentions_error() {
        let s = summary_line("x", &sample());
        assert!(s.contains("status=converged"));
        assert!(s.contains("error=2.000e-10"));
    }

    #[test]
    fn table_is_aligned() {
        let rows = vec![
            CompareRow { problem: "p".into(), method: "arnoldi(100)".into(), outcome: Ok(sample()) },
            CompareRow { problem: "p".into(), method: "sai".into(), outcome: Err("boom".into()) },
        ];
        let t = compare_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        let col = lines[0].find("status").unwrap();
        assert_eq!(&lines[1][col..col + 9], "converged");
        assert_eq!(&lines[2][col..col + 6], "failed");
    }

    #[test]
    fn codes() {
        assert_eq!(exit_code(Status::Converged), 0);
        assert_eq!(exit_code(Status::BudgetExhausted), 2);
        assert_eq!(exit_code(Status::Breakdown), 4);
    }
}
