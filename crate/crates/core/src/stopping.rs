//! Stopping rules: residual stabilization and the discrepancy principle.
//!
//! With residual norms `r_0, r_1, …`, at iteration `m ≥ 1`:
//!
//! * stabilization fires when `|r_{m-1} - r_m| / r_{m-1} < τ` (absolute value,
//!   so it stays meaningful for truncated recurrences where the residual may
//!   grow);
//! * the discrepancy principle fires when `r_{m-1} / ‖b‖ < θ ε̃`, where `ε̃`
//!   is the noise level and `θ` a safety factor slightly above one.
//!
//! Rules are pure functions of the residual history. [`StopMonitor`] adds
//! bookkeeping of the first firing of each rule so runs can continue past a
//! stop and still report where it happened.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::RunHistory;

pub const DEFAULT_THETA: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    ResidualStabilization {
        tau: f64,
    },
    Discrepancy {
        theta: f64,
        noise_level: Option<f64>,
    },
    MaxIters(usize),
    /// Fires when any member fires.
    Composite(Vec<StopRule>),
    Never,
}

/// Which rules are satisfied at one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StopCheck {
    pub fire: bool,
    pub stabilization: bool,
    pub discrepancy: bool,
    pub max_iters: bool,
}

impl StopRule {
    /// Stabilization with `tau`, plus the discrepancy principle when a noise
    /// level is known.
    pub fn standard(tau: f64, theta: f64, noise_level: Option<f64>) -> StopRule {
        let mut rules = vec![StopRule::ResidualStabilization { tau }];
        if noise_level.is_some() {
            rules.push(StopRule::Discrepancy { theta, noise_level });
        }
        StopRule::Composite(rules)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StopRule::ResidualStabilization { tau } if !(*tau > 0.0) => {
                Err(Error::Config(format!("tau must be positive, got {tau}")))
            }
            StopRule::Discrepancy {
                noise_level: None, ..
            } => Err(Error::Config(
                "discrepancy rule requires a noise level".into(),
            )),
            StopRule::Discrepancy { theta, .. } if !(*theta >= 1.0) => Err(Error::Config(format!(
                "theta must be at least 1, got {theta}"
            ))),
            StopRule::Composite(rules) => rules.iter().try_for_each(StopRule::validate),
            _ => Ok(()),
        }
    }
}

/// Evaluates `rule` at iteration `m` given residual norms `norms[0..]` and the
/// data norm `‖b‖`. Entries of `norms` beyond what a rule needs are ignored;
/// a rule whose inputs are not yet available is reported as not satisfied.
pub fn check_stop_norms(
    rule: &StopRule,
    norms: &[f64],
    data_norm: f64,
    m: usize,
) -> Result<StopCheck> {
    let mut out = StopCheck::default();
    match rule {
        StopRule::ResidualStabilization { tau } => {
            if m >= 1 && m < norms.len() {
                let prev = norms[m - 1];
                let change = if prev > 0.0 {
                    (prev - norms[m]).abs() / prev
                } else {
                    0.0
                };
                out.stabilization = change < *tau;
            }
            out.fire = out.stabilization;
        }
        StopRule::Discrepancy { theta, noise_level } => {
            let eps = noise_level
                .ok_or_else(|| Error::Config("discrepancy rule requires a noise level".into()))?;
            if m >= 1 && m <= norms.len() && data_norm > 0.0 {
                out.discrepancy = norms[m - 1] / data_norm < theta * eps;
            }
            out.fire = out.discrepancy;
        }
        StopRule::MaxIters(n) => {
            out.max_iters = m >= *n;
            out.fire = out.max_iters;
        }
        StopRule::Composite(rules) => {
            for r in rules {
                let c = check_stop_norms(r, norms, data_norm, m)?;
                out.fire |= c.fire;
                out.stabilization |= c.stabilization;
                out.discrepancy |= c.discrepancy;
                out.max_iters |= c.max_iters;
            }
        }
        StopRule::Never => {}
    }
    Ok(out)
}

/// [`check_stop_norms`] on the unweighted residual norms of a run history.
pub fn check_stop(rule: &StopRule, hist: &RunHistory, m: usize) -> Result<StopCheck> {
    let norms: Vec<f64> = hist.records.iter().map(|r| r.residual_norm).collect();
    check_stop_norms(rule, &norms, hist.data_norm, m)
}

/// How a solver reacts to its stop rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopPolicy {
    pub rule: StopRule,
    /// Keep iterating to the budget after a rule fires, only marking it.
    pub continue_past_stop: bool,
    /// Feed the covariance-weighted residual to the rules instead of the
    /// plain one (only meaningful for weighted solvers).
    pub use_weighted_residual: bool,
}

impl StopPolicy {
    pub fn new(rule: StopRule) -> Self {
        StopPolicy {
            rule,
            continue_past_stop: false,
            use_weighted_residual: false,
        }
    }

    pub fn never() -> Self {
        StopPolicy::new(StopRule::Never)
    }

    pub fn continuing(mut self) -> Self {
        self.continue_past_stop = true;
        self
    }
}

/// Tracks rule satisfaction over a run and the first iteration each rule fired.
#[derive(Debug, Clone)]
pub(crate) struct StopMonitor {
    policy: StopPolicy,
    norms: Vec<f64>,
    data_norm: f64,
    pub stab_fired_at: Option<usize>,
    pub discr_fired_at: Option<usize>,
    pub stopped_by_rule: bool,
}

impl StopMonitor {
    pub fn new(policy: &StopPolicy, data_norm: f64) -> Result<Self> {
        policy.rule.validate()?;
        Ok(StopMonitor {
            policy: policy.clone(),
            norms: Vec::new(),
            data_norm,
            stab_fired_at: None,
            discr_fired_at: None,
            stopped_by_rule: false,
        })
    }

    pub fn uses_weighted(&self) -> bool {
        self.policy.use_weighted_residual
    }

    /// Pushes the residual norm of iterate `m` (which must equal the number
    /// of norms pushed so far) and evaluates the rule. Returns the check and
    /// whether the solver should stop now.
    pub fn observe(&mut self, m: usize, residual_norm: f64) -> Result<(StopCheck, bool)> {
        debug_assert_eq!(m, self.norms.len());
        self.norms.push(residual_norm);
        if m == 0 {
            return Ok((StopCheck::default(), false));
        }
        let check = check_stop_norms(&self.policy.rule, &self.norms, self.data_norm, m)?;
        if check.stabilization && self.stab_fired_at.is_none() {
            self.stab_fired_at = Some(m);
        }
        if check.discrepancy && self.discr_fired_at.is_none() {
            self.discr_fired_at = Some(m);
        }
        let stop = check.fire && !self.policy.continue_past_stop;
        if stop {
            self.stopped_by_rule = true;
        }
        Ok((check, stop))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_residual_fires_stabilization_at_first_check() {
        let rule = StopRule::ResidualStabilization { tau: 1e-12 };
        let norms = [3.0, 3.0, 3.0];
        assert!(check_stop_norms(&rule, &norms, 1.0, 1).unwrap().fire);
    }

    #[test]
    fn discrepancy_uses_previous_residual() {
        let rule = StopRule::Discrepancy {
            theta: 1.01,
            noise_level: Some(0.01),
        };
        let norms = [0.5, 0.011, 0.009];
        assert!(!check_stop_norms(&rule, &norms, 1.0, 1).unwrap().fire);
        assert!(!check_stop_norms(&rule, &norms, 1.0, 2).unwrap().fire);
        assert!(check_stop_norms(&rule, &norms, 1.0, 3).unwrap().fire);
    }

    #[test]
    fn halving_residuals_never_stabilize() {
        let rule = StopRule::ResidualStabilization { tau: 1e-4 };
        let norms: Vec<f64> = (0..=100).map(|k| 0.5f64.powi(k)).collect();
        for m in 1..=100 {
            assert!(!check_stop_norms(&rule, &norms, 1.0, m).unwrap().fire);
        }
    }

    #[test]
    fn discrepancy_without_noise_level_is_config_error() {
        let rule = StopRule::Discrepancy {
            theta: 1.01,
            noise_level: None,
        };
        assert!(matches!(
            check_stop_norms(&rule, &[1.0, 0.5], 1.0, 1),
            Err(Error::Config(_))
        ));
        assert!(rule.validate().is_err());
    }

    #[test]
    fn composite_fires_when_any_member_fires() {
        let rule = StopRule::Composite(vec![
            StopRule::ResidualStabilization { tau: 1e-6 },
            StopRule::MaxIters(3),
        ]);
        let norms = [4.0, 2.0, 1.0, 0.5];
        assert!(!check_stop_norms(&rule, &norms, 1.0, 2).unwrap().fire);
        let c = check_stop_norms(&rule, &norms, 1.0, 3).unwrap();
        assert!(c.fire && c.max_iters && !c.stabilization);
    }

    #[test]
    fn monitor_records_first_firing_and_continues() {
        let policy = StopPolicy::new(StopRule::ResidualStabilization { tau: 0.1 }).continuing();
        let mut mon = StopMonitor::new(&policy, 1.0).unwrap();
        for (m, r) in [1.0, 0.5, 0.49, 0.2, 0.199].into_iter().enumerate() {
            let (_, stop) = mon.observe(m, r).unwrap();
            assert!(!stop);
        }
        assert_eq!(mon.stab_fired_at, Some(2));
    }
}
