//! Covariance-preconditioned nonnegative flexible CGLS for data corrupted by
//! a mix of Poisson and Gaussian noise.
//!
//! With background `β` and Gaussian deviation `σ`, the data model is
//! `b = Poisson(A x + β) + N(0, σ²)`, approximated by a weighted least squares
//! problem with diagonal covariance. The solver minimizes
//! `‖C^{-1/2}(A x - b_β)‖` over `x ≥ 0`, `b_β = b - β`, by running the
//! restarted nonnegative iteration in the `C⁻¹` inner product. `C` is either
//! fixed from the data (`b + σ²`) or refreshed from the current iterate at
//! every restart (`A x + β + σ²`).

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fcgls::SolverConfig;
use crate::linop::LinearMap;
use crate::nn::{run_restarted, NnFcglsRun, NnObserver};
use crate::stopping::StopPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CovarianceKind {
    FixedFromData,
    #[default]
    RestartDependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Gaussian standard deviation.
    pub sigma: f64,
    /// Poisson background.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub kind: CovarianceKind,
    pub sigma: f64,
    pub beta: f64,
    diag: Vec<f64>,
}

fn check_positive(diag: &[f64]) -> Result<()> {
    match diag.iter().position(|&c| !(c > 0.0)) {
        Some(index) => Err(Error::Covariance {
            index,
            value: diag[index],
        }),
        None => Ok(()),
    }
}

impl CovarianceModel {
    /// `C = diag(b) + σ² I`.
    pub fn from_data(b: &[f64], noise: NoiseParams) -> Result<Self> {
        let s2 = noise.sigma * noise.sigma;
        let diag: Vec<f64> = b.iter().map(|v| v + s2).collect();
        check_positive(&diag)?;
        Ok(CovarianceModel {
            kind: CovarianceKind::FixedFromData,
            sigma: noise.sigma,
            beta: noise.beta,
            diag,
        })
    }

    /// Fixed covariance with an explicit diagonal.
    pub fn fixed(diag: Vec<f64>) -> Result<Self> {
        check_positive(&diag)?;
        Ok(CovarianceModel {
            kind: CovarianceKind::FixedFromData,
            sigma: 0.0,
            beta: 0.0,
            diag,
        })
    }

    /// Covariance `A x + (β + σ²)`, filled in once an iterate is available.
    pub fn restart_dependent(noise: NoiseParams) -> Self {
        CovarianceModel {
            kind: CovarianceKind::RestartDependent,
            sigma: noise.sigma,
            beta: noise.beta,
            diag: Vec::new(),
        }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn is_restart_dependent(&self) -> bool {
        self.kind == CovarianceKind::RestartDependent
    }

    /// Refreshes from a known `A x`; a fixed model is returned unchanged.
    pub fn updated_from_forward(&self, ax: &[f64]) -> Result<Self> {
        match self.kind {
            CovarianceKind::FixedFromData => {
                check_len("covariance", self.diag.len(), ax.len())?;
                Ok(self.clone())
            }
            CovarianceKind::RestartDependent => {
                let shift = self.beta + self.sigma * self.sigma;
                let diag: Vec<f64> = ax.iter().map(|v| v + shift).collect();
                check_positive(&diag)?;
                Ok(CovarianceModel {
                    diag,
                    ..self.clone()
                })
            }
        }
    }
}

/// Covariance for the restart iterate `x`.
pub fn covariance_update(
    model: &CovarianceModel,
    op: &dyn LinearMap,
    x: &[f64],
) -> Result<CovarianceModel> {
    if model.kind == CovarianceKind::FixedFromData {
        return Ok(model.clone());
    }
    if !crate::vector::is_nonneg(x) {
        return Err(Error::Precondition(
            "restart iterate must be nonnegative".into(),
        ));
    }
    model.updated_from_forward(&op.apply(x)?)
}

/// Runs the covariance-weighted iteration on `b_β = b - β`.
#[allow(clippy::too_many_arguments)]
pub fn run_cp_nn_fcgls(
    op: &dyn LinearMap,
    b: &[f64],
    noise: NoiseParams,
    x0: &[f64],
    kind: CovarianceKind,
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<NnFcglsRun> {
    let model = match kind {
        CovarianceKind::FixedFromData => CovarianceModel::from_data(b, noise)?,
        CovarianceKind::RestartDependent => CovarianceModel::restart_dependent(noise),
    };
    run_cp_nn_fcgls_with(op, b, noise.beta, x0, model, cfg, stop, truth, &mut ())
}

/// [`run_cp_nn_fcgls`] with an explicit covariance model and observer.
#[allow(clippy::too_many_arguments)]
pub fn run_cp_nn_fcgls_with(
    op: &dyn LinearMap,
    b: &[f64],
    beta: f64,
    x0: &[f64],
    model: CovarianceModel,
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
    observer: &mut dyn NnObserver,
) -> Result<NnFcglsRun> {
    if !(beta >= 0.0) || !(model.sigma >= 0.0) {
        return Err(Error::Precondition(
            "noise parameters must be nonnegative".into(),
        ));
    }
    let b_beta: Vec<f64> = b.iter().map(|v| v - beta).collect();
    let name = match model.kind {
        CovarianceKind::FixedFromData => "cp-nn-fcgls",
        CovarianceKind::RestartDependent => "cp-nn-fcgls-k",
    };
    run_restarted(
        op,
        &b_beta,
        x0,
        cfg,
        stop,
        truth,
        Some(model),
        observer,
        name,
    )
}
