//! Running every solver on every noise realization and aggregating.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FlexibleKind, InitialGuess, SolverSpec};
use crate::covariance::{run_cp_nn_fcgls, CovarianceKind};
use crate::error::{check_len, Result};
use crate::history::RunHistory;
use crate::linop::LinearMap;
use crate::nn::{default_initial_guess, run_nn_fcgls};
use crate::noise::{NoiseKind, NoiseSpec};
use crate::problems::ProblemInstance;
use crate::stopping::StopPolicy;
use crate::vector::project_nonneg;

/// One solver on one noise realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub solver: String,
    pub seed: u64,
    /// Realized noise level of this realization.
    pub noise_level: f64,
    pub history: Option<RunHistory>,
    pub error: Option<String>,
}

impl RunResult {
    pub fn failed(&self) -> bool {
        self.history.is_none()
    }
}

/// The four table columns for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub min_rel_error: f64,
    /// Iteration attaining the minimum.
    pub iterations: usize,
    /// Seconds spent reaching that iteration.
    pub total_time: f64,
    /// `total_time / iterations` (0 when the minimum is the initial guess).
    pub average_time: f64,
}

impl RunMetrics {
    pub fn from_history(h: &RunHistory) -> Option<Self> {
        let (min_rel_error, iterations) = h.min_relative_error()?;
        let total_time = h.record_at(iterations).map_or(0, |r| r.wall_ns) as f64 * 1e-9;
        let average_time = if iterations > 0 {
            total_time / iterations as f64
        } else {
            0.0
        };
        Some(RunMetrics {
            min_rel_error,
            iterations,
            total_time,
            average_time,
        })
    }
}

/// Means over the successful runs of one solver; `None` when every run
/// failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverAggregate {
    pub solver: String,
    pub runs: usize,
    pub failed: usize,
    pub min_rel_error: Option<f64>,
    pub iterations: Option<f64>,
    pub total_time: Option<f64>,
    pub average_time: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub problem: String,
    pub unknowns: usize,
    pub measurements: usize,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub aggregates: Vec<SolverAggregate>,
    /// Ordered by solver, then seed.
    pub runs: Vec<RunResult>,
}

impl ExperimentReport {
    pub fn failed_runs(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(|r| r.failed())
    }

    pub fn aggregate(&self, solver: &str) -> Option<&SolverAggregate> {
        self.aggregates.iter().find(|a| a.solver == solver)
    }

    pub fn runs_of<'a>(&'a self, solver: &'a str) -> impl Iterator<Item = &'a RunResult> + 'a {
        self.runs.iter().filter(move |r| r.solver == solver)
    }
}

fn background(p: &ProblemInstance) -> f64 {
    match p.noise.kind {
        NoiseKind::GaussianPoisson => p.noise.beta,
        NoiseKind::GaussianOnly => 0.0,
    }
}

fn initial_guess(kind: InitialGuess, p: &ProblemInstance, b_beta: &[f64]) -> Result<Vec<f64>> {
    let mut x0 = match kind {
        InitialGuess::Default => return default_initial_guess(&p.op, b_beta),
        InitialGuess::Zero => return Ok(vec![0.0; p.op.cols()]),
        InitialGuess::ProjectedData => {
            check_len("projected data as initial guess", p.op.cols(), b_beta.len())?;
            b_beta.to_vec()
        }
        InitialGuess::ProjectedAdjoint => p.op.apply_transpose(b_beta)?,
    };
    project_nonneg(&mut x0);
    Ok(x0)
}

/// Runs one solver on one problem under the experiment's shared settings.
///
/// All solvers start from the configured initial guess built from `b - β`.
/// Solvers that model the noise receive the raw data and the noise
/// parameters; the others receive `b - β`.
pub fn run_solver(
    cfg: &ExperimentConfig,
    spec: &SolverSpec,
    p: &ProblemInstance,
) -> Result<RunHistory> {
    let beta = background(p);
    let b_beta: Vec<f64> = p.b.iter().map(|v| v - beta).collect();
    let x0 = initial_guess(cfg.initial_guess, p, &b_beta)?;
    let scfg = cfg.solver_config(Some(p.noise_level));
    let stop = StopPolicy {
        rule: scfg.stop_rule(),
        continue_past_stop: cfg.continue_past_stop,
        use_weighted_residual: cfg.use_weighted_residual,
    };
    let truth = Some(p.x_exact.as_slice());
    let params = cfg.noise_params(p);
    match spec {
        SolverSpec::Flexible(FlexibleKind::NnFcgls) => {
            Ok(run_nn_fcgls(&p.op, &b_beta, &x0, &scfg, &stop, truth)?.history)
        }
        SolverSpec::Flexible(kind) => {
            let kind = match kind {
                FlexibleKind::CpNnFcgls => CovarianceKind::FixedFromData,
                _ => CovarianceKind::RestartDependent,
            };
            Ok(run_cp_nn_fcgls(&p.op, &p.b, params, &x0, kind, &scfg, &stop, truth)?.history)
        }
        SolverSpec::Baseline(b) => {
            let data = if b.needs_noise() { &p.b } else { &b_beta };
            b.run(&p.op, data, Some(params), &x0, &scfg, &stop, truth)
        }
    }
}

/// Builds the noise-free problem once, draws one realization per seed, and
/// runs every solver on every realization in parallel. A failing run is
/// recorded with its error and left out of the aggregates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let base = cfg.problem.build(&NoiseSpec::default())?;
    let problems: Vec<ProblemInstance> = cfg
        .seeds
        .par_iter()
        .map(|&seed| base.with_noise(&NoiseSpec { seed, ..cfg.noise }))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..cfg.solvers.len())
        .flat_map(|s| (0..cfg.seeds.len()).map(move |k| (s, k)))
        .collect();
    let runs: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(s, k)| {
            let spec = &cfg.solvers[s];
            let p = &problems[k];
            let (history, error) = match run_solver(cfg, spec, p) {
                Ok(h) => (Some(h), None),
                Err(e) => {
                    log::warn!("{} failed on seed {}: {e}", spec.label(), cfg.seeds[k]);
                    (None, Some(e.to_string()))
                }
            };
            RunResult {
                solver: spec.label(),
                seed: cfg.seeds[k],
                noise_level: p.noise_level,
                history,
                error,
            }
        })
        .collect();

    let aggregates = cfg
        .solvers
        .iter()
        .map(|spec| {
            let label = spec.label();
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.solver == label).collect();
            let metrics: Vec<RunMetrics> = mine
                .iter()
                .filter_map(|r| r.history.as_ref().and_then(RunMetrics::from_history))
                .collect();
            let mean = |f: fn(&RunMetrics) -> f64| {
                (!metrics.is_empty())
                    .then(|| metrics.iter().map(f).sum::<f64>() / metrics.len() as f64)
            };
            SolverAggregate {
                runs: metrics.len(),
                failed: mine.len() - metrics.len(),
                min_rel_error: mean(|m| m.min_rel_error),
                iterations: mean(|m| m.iterations as f64),
                total_time: mean(|m| m.total_time),
                average_time: mean(|m| m.average_time),
                solver: label,
            }
        })
        .collect();

    Ok(ExperimentReport {
        name: cfg.name.clone(),
        problem: base.name.clone(),
        unknowns: base.x_exact.len(),
        measurements: base.b.len(),
        budget: cfg.budget,
        seeds: cfg.seeds.clone(),
        aggregates,
        runs,
    })
}
