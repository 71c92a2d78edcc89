//! Nonnegative flexible CGLS with restarts.
//!
//! Flexible CGLS with `L^(m) = diag(x_{m-1})` and the step length cut back so
//! the next iterate stays in the nonnegative orthant:
//!
//! ```text
//! ᾱ = min(α, min_{i : d_i < 0} -x_i / d_i)
//! ```
//!
//! Components that hit the bound are set to exactly zero. The Krylov space is
//! rebuilt from the current iterate after `m_max_in` inner iterations, or as
//! soon as the bounded step is zero. Within a cycle a zero component stays
//! zero, because both `X z` and every later direction vanish there.

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::error::{check_len, Error, Result};
use crate::fcgls::{FcglsState, SolverConfig};
use crate::history::{Recorder, RunHistory, Sample, Termination};
use crate::linop::{CountingMap, DiagonalOperator, LinearMap};
use crate::stopping::StopPolicy;
use crate::vector::{dot_with, is_nonneg, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestartReason {
    /// The bounded step was zero.
    StepZero,
    /// The inner iteration limit was reached.
    InnerMax,
    /// The stop rule ended the last cycle.
    StopRule,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NnFcglsRun {
    /// Number of outer cycles started.
    pub outer_k: usize,
    /// Inner iterations performed in each cycle.
    pub inner_counts: Vec<usize>,
    /// Why each cycle ended (the last one may end on the budget with no entry).
    pub restart_reasons: Vec<RestartReason>,
    pub history: RunHistory,
}

/// Hooks into the restarted iteration, used to check structural properties.
pub trait NnObserver {
    /// A new cycle `k` starts from `x0` with first direction `d0`.
    fn cycle_start(&mut self, _k: usize, _x0: &[f64], _d0: &[f64]) {}
    /// An inner step with unconstrained length `alpha` and taken length
    /// `alpha_bar` produced `x`.
    fn step(&mut self, _k: usize, _alpha: f64, _alpha_bar: f64, _x: &[f64]) {}
}

impl NnObserver for () {}

/// Largest step `ᾱ ≤ α` keeping `x + ᾱ d ≥ 0`; never negative.
pub fn bounded_step(alpha: f64, x: &[f64], d: &[f64]) -> f64 {
    bounded_step_blocking(alpha, x, d).0
}

/// [`bounded_step`] plus the components that attain the bound (all of them
/// on ties). The list is empty when the unconstrained step is feasible.
pub fn bounded_step_blocking(alpha: f64, x: &[f64], d: &[f64]) -> (f64, Vec<usize>) {
    let mut ratio = f64::INFINITY;
    for (&xi, &di) in x.iter().zip(d) {
        if di < 0.0 {
            ratio = ratio.min(-xi / di);
        }
    }
    let alpha = alpha.max(0.0);
    if alpha < ratio {
        return (alpha, Vec::new());
    }
    let blocking = x
        .iter()
        .zip(d)
        .enumerate()
        .filter(|(_, (&xi, &di))| di < 0.0 && -xi / di == ratio)
        .map(|(i, _)| i)
        .collect();
    (ratio.max(0.0), blocking)
}

/// `diag(x)`.
pub fn nn_precond(x: &[f64]) -> Result<DiagonalOperator> {
    if let Some(i) = x.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::InvariantViolation(format!(
            "preconditioner entry {i} is {} (iterate must be nonnegative)",
            x[i]
        )));
    }
    DiagonalOperator::new(x.to_vec())
}

/// `max(b, 0)` for square problems, `max(Aᵀ b, 0)` otherwise.
pub fn default_initial_guess(op: &dyn LinearMap, b: &[f64]) -> Result<Vec<f64>> {
    let mut x0 = if op.rows() == op.cols() {
        check_len("initial guess: b", op.rows(), b.len())?;
        b.to_vec()
    } else {
        op.apply_transpose(b)?
    };
    crate::vector::project_nonneg(&mut x0);
    Ok(x0)
}

/// Runs the restarted nonnegative flexible CGLS iteration.
pub fn run_nn_fcgls(
    op: &dyn LinearMap,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<NnFcglsRun> {
    run_restarted(op, b, x0, cfg, stop, truth, None, &mut (), "nn-fcgls")
}

/// [`run_nn_fcgls`] reporting cycle starts and steps to `observer`.
pub fn run_nn_fcgls_observed(
    op: &dyn LinearMap,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
    observer: &mut dyn NnObserver,
) -> Result<NnFcglsRun> {
    run_restarted(op, b, x0, cfg, stop, truth, None, observer, "nn-fcgls")
}

fn inverse(diag: &[f64]) -> Vec<f64> {
    diag.iter().map(|c| 1.0 / c).collect()
}

/// Shared driver for the plain and the covariance-weighted variants. With a
/// covariance model, all residual-side inner products use `C⁻¹` and the
/// model is refreshed at every restart.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_restarted(
    op: &dyn LinearMap,
    data: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
    mut covariance: Option<CovarianceModel>,
    observer: &mut dyn NnObserver,
    name: &str,
) -> Result<NnFcglsRun> {
    cfg.validate()?;
    check_len("initial guess", op.cols(), x0.len())?;
    check_len("data", op.rows(), data.len())?;
    if !is_nonneg(x0) {
        return Err(Error::Precondition(
            "initial guess must be nonnegative".into(),
        ));
    }
    let op = CountingMap::new(op);
    let data_norm = norm2(data);
    let zero_tol = cfg.zero_tol_for(data_norm);

    let ax0 = op.apply(x0)?;
    let r0: Vec<f64> = data.iter().zip(&ax0).map(|(b, a)| b - a).collect();
    let metric = match covariance.as_mut() {
        Some(model) => {
            *model = model.updated_from_forward(&ax0)?;
            Some(inverse(model.diag()))
        }
        None => None,
    };
    let weighted_data_norm = metric
        .as_ref()
        .map(|c| dot_with(Some(c), data, data).sqrt());
    let l0 = if x0.iter().all(|&v| v == 0.0) {
        DiagonalOperator::identity(x0.len())
    } else {
        nn_precond(x0)?
    };
    let mut state = FcglsState::from_residual(&op, x0.to_vec(), r0, &l0, metric)?;
    let mut rec = Recorder::new(name, data_norm, weighted_data_norm, stop, truth)?;
    let weighted = covariance.is_some();
    fn sample(
        state: &FcglsState,
        weighted: bool,
        alpha: f64,
        k: usize,
        applies: usize,
    ) -> Sample<'_> {
        Sample {
            x: &state.x,
            residual_norm: state.residual_norm(),
            weighted_residual_norm: weighted.then(|| state.weighted_residual_norm()),
            alpha,
            outer_k: k,
            applies,
        }
    }

    let mut k = 1usize;
    let mut inner = 0usize;
    let mut total = 0usize;
    let mut inner_counts = Vec::new();
    let mut reasons = Vec::new();
    let mut precond = |_m: usize, x: &[f64]| nn_precond(x);

    observer.cycle_start(k, &state.x, state.last_direction());
    let mut stopped = rec.record(sample(&state, weighted, 0.0, k, op.total_calls()))?;
    let termination = loop {
        if stopped {
            inner_counts.push(inner);
            reasons.push(RestartReason::StopRule);
            break Termination::StopRule;
        }
        if total >= cfg.m_max {
            inner_counts.push(inner);
            break Termination::Budget;
        }

        let (alpha, ww) = state.alpha();
        let d_norm = norm2(state.last_direction());
        let (alpha_bar, blocking) = if d_norm <= zero_tol {
            (0.0, Vec::new())
        } else if ww <= zero_tol * zero_tol {
            if total == 0 {
                return Err(Error::ZeroDirection {
                    iteration: 1,
                    norm_sq: ww,
                });
            }
            // The direction lies in the numerical null space of A: nothing
            // left to gain along it, so treat it like a zero step.
            (0.0, Vec::new())
        } else if alpha <= zero_tol {
            (0.0, Vec::new())
        } else {
            bounded_step_blocking(alpha, &state.x, state.last_direction())
        };

        if alpha_bar == 0.0 {
            if inner == 0 {
                inner_counts.push(0);
                if d_norm <= zero_tol || ww <= zero_tol * zero_tol || alpha <= zero_tol {
                    break Termination::Converged;
                }
                log::warn!("{name}: zero bounded step at the start of cycle {k}");
                reasons.push(RestartReason::StepZero);
                break Termination::StepZeroAtRestart;
            }
            inner_counts.push(inner);
            reasons.push(RestartReason::StepZero);
            if k >= cfg.k_max_out {
                break Termination::Budget;
            }
            rec.mark_restart();
            k += 1;
            inner = 0;
            restart(&op, data, &mut state, covariance.as_mut())?;
            observer.cycle_start(k, &state.x, state.last_direction());
            continue;
        }

        state.advance(&op, alpha_bar, Some(&blocking), &mut precond, cfg.m_hat)?;
        inner += 1;
        total += 1;
        observer.step(k, alpha, alpha_bar, &state.x);
        stopped = rec.record(sample(&state, weighted, alpha_bar, k, op.total_calls()))?;

        if !stopped && inner >= cfg.m_max_in && total < cfg.m_max {
            inner_counts.push(inner);
            reasons.push(RestartReason::InnerMax);
            if k >= cfg.k_max_out {
                break Termination::Budget;
            }
            rec.mark_restart();
            k += 1;
            inner = 0;
            restart(&op, data, &mut state, covariance.as_mut())?;
            observer.cycle_start(k, &state.x, state.last_direction());
        }
    };

    Ok(NnFcglsRun {
        outer_k: k,
        inner_counts,
        restart_reasons: reasons,
        history: rec.finish(state.x, termination),
    })
}

/// Starts a new cycle at the current iterate. The last inner step already
/// formed `z̄ = diag(x) Aᵀ C⁻¹ r` and `A z̄`, so without a covariance
/// refresh the restart costs no products.
fn restart(
    op: &dyn LinearMap,
    data: &[f64],
    state: &mut FcglsState,
    covariance: Option<&mut CovarianceModel>,
) -> Result<()> {
    match covariance {
        Some(model) if model.is_restart_dependent() => {
            let ax: Vec<f64> = data.iter().zip(&state.r).map(|(b, r)| b - r).collect();
            *model = model.updated_from_forward(&ax)?;
            let l = nn_precond(&state.x)?;
            state.restart_with_metric(op, inverse(model.diag()), &l);
        }
        _ => state.restart_reusing(),
    }
    Ok(())
}
