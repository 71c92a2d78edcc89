//! Comparison solvers sharing the operator interface and run history of the
//! flexible solvers.

mod cg;
mod cimmino;
mod gradient;
mod mrnsd;

use serde::{Deserialize, Serialize};

pub use cg::{run_cgls, run_naive_nncg, run_rest_nncg};
pub use cimmino::{
    default_cimmino_relaxation, row_norms_sq, run_cimmino_nn, CIMMINO_RELAXATION_FACTOR,
    CIMMINO_SIGMA_ITERS,
};
pub use gradient::{
    estimate_sigma1, estimate_sigma1_from, run_fista, run_nnsd, FistaParams, SIGMA1_ITERS,
};
pub use mrnsd::{
    run_kwmrnsd, run_kwmrnsd_traced, run_mrnsd, run_pmrnsd, run_wmrnsd, PMRNSD_THRESHOLD,
};

use crate::covariance::NoiseParams;
use crate::error::{Error, Result};
use crate::fcgls::SolverConfig;
use crate::history::RunHistory;
use crate::linop::LinearOperator;
use crate::stopping::StopPolicy;

/// A baseline solver together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselineKind {
    Mrnsd,
    Pmrnsd {
        threshold: f64,
    },
    Wmrnsd,
    Kwmrnsd,
    Nnsd,
    /// `t_inv = None` uses `2 σ₁²` from a short bidiagonalization.
    Fista {
        t_inv: Option<f64>,
    },
    Mfista {
        t_inv: Option<f64>,
    },
    RestNncg,
    NaiveNncg,
    /// `relaxation = None` uses `1.9 / σ₁²` of the row-weighted operator.
    Cimmino {
        relaxation: Option<f64>,
    },
    PlainCgls,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Mrnsd => "mrnsd",
            BaselineKind::Pmrnsd { .. } => "pmrnsd",
            BaselineKind::Wmrnsd => "wmrnsd",
            BaselineKind::Kwmrnsd => "kwmrnsd",
            BaselineKind::Nnsd => "nnsd",
            BaselineKind::Fista { .. } => "fista",
            BaselineKind::Mfista { .. } => "mfista",
            BaselineKind::RestNncg => "rest-nncg",
            BaselineKind::NaiveNncg => "naive-nncg",
            BaselineKind::Cimmino { .. } => "cimmino",
            BaselineKind::PlainCgls => "cgls",
        }
    }

    /// Parameters for a solver name as used on the command line. The
    /// parameter of PMRNSD, FISTA, MFISTA and Cimmino may be given as
    /// `name(value)`, e.g. `mfista(0.2)`; otherwise defaults are used.
    pub fn from_name(name: &str) -> Option<Self> {
        if let Some((base, rest)) = name.split_once('(') {
            let v: f64 = rest.strip_suffix(')')?.trim().parse().ok()?;
            return Some(match base.trim() {
                "pmrnsd" => BaselineKind::Pmrnsd { threshold: v },
                "fista" => BaselineKind::Fista { t_inv: Some(v) },
                "mfista" => BaselineKind::Mfista { t_inv: Some(v) },
                "cimmino" => BaselineKind::Cimmino {
                    relaxation: Some(v),
                },
                _ => return None,
            });
        }
        Some(match name {
            "mrnsd" => BaselineKind::Mrnsd,
            "pmrnsd" => BaselineKind::Pmrnsd {
                threshold: PMRNSD_THRESHOLD,
            },
            "wmrnsd" => BaselineKind::Wmrnsd,
            "kwmrnsd" => BaselineKind::Kwmrnsd,
            "nnsd" => BaselineKind::Nnsd,
            "fista" => BaselineKind::Fista { t_inv: None },
            "mfista" => BaselineKind::Mfista { t_inv: None },
            "rest-nncg" => BaselineKind::RestNncg,
            "naive-nncg" => BaselineKind::NaiveNncg,
            "cimmino" => BaselineKind::Cimmino { relaxation: None },
            "cgls" => BaselineKind::PlainCgls,
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BaselineKind::Pmrnsd { threshold } if !(threshold >= 0.0) => Err(Error::Config(
                format!("threshold must be nonnegative, got {threshold}"),
            )),
            BaselineKind::Fista { t_inv: Some(t) } | BaselineKind::Mfista { t_inv: Some(t) }
                if !(t > 0.0 && t.is_finite()) =>
            {
                Err(Error::Config(format!(
                    "inverse step size must be positive, got {t}"
                )))
            }
            BaselineKind::Cimmino {
                relaxation: Some(relaxation),
            } if !(relaxation > 0.0 && relaxation.is_finite()) => Err(Error::Config(format!(
                "relaxation must be positive, got {relaxation}"
            ))),
            _ => Ok(()),
        }
    }

    /// Whether the solver needs Gaussian and Poisson noise parameters.
    pub fn needs_noise(&self) -> bool {
        matches!(self, BaselineKind::Wmrnsd | BaselineKind::Kwmrnsd)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn run(
        &self,
        op: &LinearOperator,
        b: &[f64],
        noise: Option<NoiseParams>,
        x0: &[f64],
        cfg: &SolverConfig,
        stop: &StopPolicy,
        truth: Option<&[f64]>,
    ) -> Result<RunHistory> {
        self.validate()?;
        let need_noise = || {
            noise.ok_or_else(|| {
                Error::Config(format!(
                    "{} needs noise parameters sigma and beta",
                    self.name()
                ))
            })
        };
        let default_t_inv = |t: Option<f64>| -> Result<f64> {
            match t {
                Some(t) => Ok(t),
                None => {
                    let s = estimate_sigma1(op, SIGMA1_ITERS, 0)?;
                    Ok(2.0 * s * s)
                }
            }
        };
        match *self {
            BaselineKind::Mrnsd => run_mrnsd(op, b, x0, cfg, stop, truth),
            BaselineKind::Pmrnsd { threshold } => {
                run_pmrnsd(op, b, x0, threshold, cfg, stop, truth)
            }
            BaselineKind::Wmrnsd => run_wmrnsd(op, b, need_noise()?, x0, cfg, stop, truth),
            BaselineKind::Kwmrnsd => run_kwmrnsd(op, b, need_noise()?, x0, cfg, stop, truth),
            BaselineKind::Nnsd => run_nnsd(op, b, x0, cfg, stop, truth),
            BaselineKind::Fista { t_inv } => {
                let p = FistaParams::fista(default_t_inv(t_inv)?);
                run_fista(op, b, x0, p, cfg, stop, truth)
            }
            BaselineKind::Mfista { t_inv } => {
                let p = FistaParams::mfista(Some(default_t_inv(t_inv)?));
                run_fista(op, b, x0, p, cfg, stop, truth)
            }
            BaselineKind::RestNncg => run_rest_nncg(op, b, x0, cfg, stop, truth),
            BaselineKind::NaiveNncg => run_naive_nncg(op, b, x0, cfg, stop, truth),
            BaselineKind::Cimmino { relaxation } => {
                let lambda = match relaxation {
                    Some(l) => l,
                    None => default_cimmino_relaxation(op)?,
                };
                run_cimmino_nn(op, b, x0, lambda, cfg, stop, truth)
            }
            BaselineKind::PlainCgls => run_cgls(op, b, x0, cfg, stop, truth),
        }
    }
}
