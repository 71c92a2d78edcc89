//! Result files: one CSV per run, `summary.json` and `report.md`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{ExperimentReport, SolverAggregate};
use crate::error::{Error, Result};
use crate::history::RunHistory;

pub const CSV_HEADER: &str =
    "iter,outer_k,res_norm,rel_err,alpha,restart,stop_stab,stop_discr,applies,wall_ns";

pub fn history_file_name(solver: &str, seed: u64) -> String {
    format!("history_{solver}_{seed}.csv")
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// CSV text of a run history, header included.
pub fn history_csv(h: &RunHistory) -> String {
    let mut out = String::with_capacity(64 * (h.records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &h.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.m,
            r.outer_k,
            r.residual_norm,
            opt(r.relative_error),
            r.alpha_used,
            u8::from(r.restarted),
            u8::from(r.stop_stab),
            u8::from(r.stop_discr),
            r.applies,
            r.wall_ns
        );
    }
    out
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub iter: usize,
    pub outer_k: usize,
    pub res_norm: f64,
    pub rel_err: Option<f64>,
    pub alpha: f64,
    pub restart: bool,
    pub stop_stab: bool,
    pub stop_discr: bool,
    pub applies: usize,
    pub wall_ns: u64,
}

pub fn read_history_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, what: &str| Error::Parse {
        path: path.to_owned(),
        message: format!("line {line}: {what}"),
    };
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad(i + 2, "expected 10 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad(i + 2, "bad integer"));
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(i + 2, "bad flag")),
            };
            Ok(CsvRow {
                iter: int(f[0])? as usize,
                outer_k: int(f[1])? as usize,
                res_norm: num(f[2])?,
                rel_err: if f[3].is_empty() {
                    None
                } else {
                    Some(num(f[3])?)
                },
                alpha: num(f[4])?,
                restart: flag(f[5])?,
                stop_stab: flag(f[6])?,
                stop_discr: flag(f[7])?,
                applies: int(f[8])? as usize,
                wall_ns: int(f[9])?,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FailedRun {
    pub solver: String,
    pub seed: u64,
    pub error: String,
}

/// Contents of `summary.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub problem: String,
    pub unknowns: usize,
    pub measurements: usize,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub solvers: Vec<SolverAggregate>,
    pub failed_runs: Vec<FailedRun>,
}

impl Summary {
    pub fn from_report(report: &ExperimentReport) -> Self {
        Summary {
            name: report.name.clone(),
            problem: report.problem.clone(),
            unknowns: report.unknowns,
            measurements: report.measurements,
            budget: report.budget,
            seeds: report.seeds.clone(),
            solvers: report.aggregates.clone(),
            failed_runs: report
                .failed_runs()
                .map(|r| FailedRun {
                    solver: r.solver.clone(),
                    seed: r.seed,
                    error: r.error.clone().unwrap_or_default(),
                })
                .collect(),
        }
    }
}

fn sci(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4e}"))
}

pub fn report_markdown(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let title = if report.name.is_empty() {
        &report.problem
    } else {
        &report.name
    };
    let _ = writeln!(s, "# {title}\n");
    let _ = writeln!(
        s,
        "Problem `{}`: {} unknowns, {} measurements. Budget {} iterations, {} noise realizations (seeds {:?}).\n",
        report.problem,
        report.unknowns,
        report.measurements,
        report.budget,
        report.seeds.len(),
        report.seeds
    );
    s.push_str(
        "| solver | rel.error | iterations | tot.time (s) | av.time (s) | runs | failed |\n",
    );
    s.push_str("|---|---|---|---|---|---|---|\n");
    for a in &report.aggregates {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            a.solver,
            sci(a.min_rel_error),
            a.iterations.map_or("-".into(), |v| format!("{v:.2}")),
            sci(a.total_time),
            sci(a.average_time),
            a.runs,
            a.failed
        );
    }
    let failed: Vec<_> = report.failed_runs().collect();
    if !failed.is_empty() {
        s.push_str("\n## Failed runs\n\n");
        for r in failed {
            let _ = writeln!(
                s,
                "- {} (seed {}): {}",
                r.solver,
                r.seed,
                r.error.as_deref().unwrap_or("")
            );
        }
    }
    s
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Writes all result files into `dir`, creating it if needed.
pub fn emit_outputs(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in &report.runs {
        if let Some(h) = &r.history {
            write(
                dir.join(history_file_name(&r.solver, r.seed)),
                &history_csv(h),
            )?;
        }
    }
    let summary =
        serde_json::to_string_pretty(&Summary::from_report(report)).expect("summary serializes");
    write(dir.join("summary.json"), &summary)?;
    write(dir.join("report.md"), &report_markdown(report))
}
