//! Per-iteration run records shared by every solver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stopping::{StopCheck, StopMonitor, StopPolicy};
use crate::vector::{norm2, sub};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Global iteration index; 0 is the initial guess.
    pub m: usize,
    /// Outer cycle (restart) counter, 1-based; 0 for solvers without restarts.
    pub outer_k: usize,
    pub residual_norm: f64,
    pub weighted_residual_norm: Option<f64>,
    pub relative_error: Option<f64>,
    /// Step length actually taken to produce this iterate.
    pub alpha_used: f64,
    /// True when a restart happened right after this iterate.
    pub restarted: bool,
    pub stop_stab: bool,
    pub stop_discr: bool,
    /// Cumulative forward + transpose operator products.
    pub applies: usize,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Iteration budget (or outer-cycle limit) reached.
    Budget,
    StopRule,
    /// `α = 0` with a nonzero direction: no further progress possible.
    Breakdown,
    /// Gradient-type quantity vanished: the iterate satisfies the optimality
    /// system to working precision.
    Converged,
    /// A restart produced a zero first step, which cannot happen in exact
    /// arithmetic; the run ends instead of looping on empty cycles.
    StepZeroAtRestart,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunHistory {
    pub solver: String,
    pub data_norm: f64,
    pub records: Vec<IterationRecord>,
    /// Final iterate.
    pub x: Vec<f64>,
    pub termination: Termination,
    pub stab_fired_at: Option<usize>,
    pub discr_fired_at: Option<usize>,
    /// Iterations at which a restart happened.
    pub restarts: Vec<usize>,
}

impl RunHistory {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.m)
    }

    pub fn residual_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual_norm).collect()
    }

    pub fn relative_errors(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.relative_error).collect()
    }

    /// `(min relative error, iteration attaining it)`; the earliest on ties.
    pub fn min_relative_error(&self) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for r in &self.records {
            let e = r.relative_error?;
            if best.is_none_or(|(b, _)| e < b) {
                best = Some((e, r.m));
            }
        }
        best
    }

    pub fn record_at(&self, m: usize) -> Option<&IterationRecord> {
        self.records.iter().find(|r| r.m == m)
    }
}

/// `‖x_exact - x‖ / ‖x_exact‖`.
pub fn relative_error(x: &[f64], x_exact: &[f64]) -> Result<f64> {
    crate::error::check_len("relative_error", x_exact.len(), x.len())?;
    let denom = norm2(x_exact);
    if denom == 0.0 {
        return Err(Error::Domain("reference solution has zero norm".into()));
    }
    Ok(norm2(&sub(x_exact, x)) / denom)
}

/// One iterate as reported by a solver.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample<'a> {
    pub x: &'a [f64],
    pub residual_norm: f64,
    pub weighted_residual_norm: Option<f64>,
    pub alpha: f64,
    pub outer_k: usize,
    pub applies: usize,
}

/// Builds a [`RunHistory`] while a solver runs and drives its stop rule.
pub(crate) struct Recorder<'a> {
    truth: Option<(&'a [f64], f64)>,
    monitor: StopMonitor,
    started: Instant,
    history: RunHistory,
}

impl<'a> Recorder<'a> {
    pub fn new(
        solver: &str,
        data_norm: f64,
        weighted_data_norm: Option<f64>,
        stop: &StopPolicy,
        truth: Option<&'a [f64]>,
    ) -> Result<Self> {
        let truth = match truth {
            Some(t) => {
                let n = norm2(t);
                if n == 0.0 {
                    return Err(Error::Domain("reference solution has zero norm".into()));
                }
                Some((t, n))
            }
            None => None,
        };
        let monitor_norm = match (stop.use_weighted_residual, weighted_data_norm) {
            (true, Some(w)) => w,
            _ => data_norm,
        };
        Ok(Recorder {
            truth,
            monitor: StopMonitor::new(stop, monitor_norm)?,
            started: Instant::now(),
            history: RunHistory {
                solver: solver.to_string(),
                data_norm,
                records: Vec::new(),
                x: Vec::new(),
                termination: Termination::Budget,
                stab_fired_at: None,
                discr_fired_at: None,
                restarts: Vec::new(),
            },
        })
    }

    /// Next iteration index to be recorded.
    pub fn next_m(&self) -> usize {
        self.history.records.len()
    }

    /// Records an iterate; returns `true` when the stop rule asks to stop.
    pub fn record(&mut self, s: Sample<'_>) -> Result<bool> {
        let m = self.next_m();
        let relative_error = self.truth.map(|(t, n)| norm2(&sub(t, s.x)) / n);
        let monitored = match (self.monitor.uses_weighted(), s.weighted_residual_norm) {
            (true, Some(w)) => w,
            _ => s.residual_norm,
        };
        let (check, stop): (StopCheck, bool) = self.monitor.observe(m, monitored)?;
        self.history.records.push(IterationRecord {
            m,
            outer_k: s.outer_k,
            residual_norm: s.residual_norm,
            weighted_residual_norm: s.weighted_residual_norm,
            relative_error,
            alpha_used: s.alpha,
            restarted: false,
            stop_stab: check.stabilization,
            stop_discr: check.discrepancy,
            applies: s.applies,
            wall_ns: self.started.elapsed().as_nanos() as u64,
        });
        Ok(stop)
    }

    /// Marks a restart right after the most recent iterate.
    pub fn mark_restart(&mut self) {
        if let Some(last) = self.history.records.last_mut() {
            last.restarted = true;
            self.history.restarts.push(last.m);
        }
    }

    pub fn finish(mut self, x: Vec<f64>, termination: Termination) -> RunHistory {
        self.history.x = x;
        self.history.termination = if self.monitor.stopped_by_rule {
            crate::history::Termination::StopRule
        } else {
            termination
        };
        self.history.stab_fired_at = self.monitor.stab_fired_at;
        self.history.discr_fired_at = self.monitor.discr_fired_at;
        self.history
    }
}
