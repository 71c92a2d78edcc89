//! Simulated measurement noise.
//!
//! Data are `b = b_exact + η` with Gaussian `η ~ N(0, σ² I)`, or
//! `b = Poisson(b_exact) + Poisson(β) + N(0, σ² I)` for photon-counting
//! detectors with background `β`. The noise level is `‖η‖ / ‖b_exact‖`.
//!
//! Random numbers come from ChaCha8 seeded with a 64-bit seed; independent
//! streams of the same seed serve different purposes within one run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::norm2;

/// Stream used for measurement noise.
pub const NOISE_STREAM: u64 = 0;
/// Stream used by problem generators.
pub const PROBLEM_STREAM: u64 = 1;

/// Seeded generator on a given stream.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    GaussianOnly,
    GaussianPoisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub beta: f64,
    /// Rescales the Gaussian term so that its norm is exactly this fraction
    /// of `‖b_exact‖`.
    pub target_level: Option<f64>,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            kind: NoiseKind::GaussianOnly,
            sigma: 0.0,
            beta: 0.0,
            target_level: None,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn gaussian_level(level: f64, seed: u64) -> Self {
        NoiseSpec {
            target_level: Some(level),
            seed,
            ..NoiseSpec::default()
        }
    }

    pub fn gaussian_poisson(sigma: f64, beta: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::GaussianPoisson,
            sigma,
            beta,
            target_level: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config(
                "noise sigma and beta must be nonnegative".into(),
            ));
        }
        if self.kind == NoiseKind::GaussianOnly && self.beta != 0.0 {
            return Err(Error::Config(
                "Gaussian-only noise has no background".into(),
            ));
        }
        if let Some(t) = self.target_level {
            if !(t >= 0.0) {
                return Err(Error::Config(format!(
                    "target noise level must be nonnegative, got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyData {
    pub b: Vec<f64>,
    /// `‖b - β - b_exact‖`; the background is a known offset, not noise.
    pub eta_norm: f64,
    /// `eta_norm / ‖b_exact‖`
    pub level: f64,
}

/// Draws from a Poisson distribution with the given mean.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::Domain(format!(
            "Poisson mean must be finite and nonnegative, got {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.sample(rng) as u64)
}

/// Adds noise to `b_exact` according to `spec`.
pub fn corrupt(b_exact: &[f64], spec: &NoiseSpec) -> Result<NoisyData> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, NOISE_STREAM);
    let exact_norm = norm2(b_exact);

    let mut gauss: Vec<f64> = (0..b_exact.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            spec.sigma * z
        })
        .collect();
    if let Some(target) = spec.target_level {
        if spec.sigma == 0.0 {
            gauss = (0..b_exact.len())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
        }
        let g = norm2(&gauss);
        let scale = if g > 0.0 {
            target * exact_norm / g
        } else {
            0.0
        };
        gauss.iter_mut().for_each(|v| *v *= scale);
    }

    let b: Vec<f64> = match spec.kind {
        NoiseKind::GaussianOnly => b_exact.iter().zip(&gauss).map(|(b, g)| b + g).collect(),
        NoiseKind::GaussianPoisson => {
            // Roundoff from FFT products can leave tiny negative means.
            let floor = -1e-12 * b_exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut out = Vec::with_capacity(b_exact.len());
            for (&mean, g) in b_exact.iter().zip(&gauss) {
                let mean = if mean < 0.0 && mean >= floor {
                    0.0
                } else {
                    mean
                };
                let counts = sample_poisson(mean, &mut rng)? + sample_poisson(spec.beta, &mut rng)?;
                out.push(counts as f64 + g);
            }
            out
        }
    };
    let beta = match spec.kind {
        NoiseKind::GaussianOnly => 0.0,
        NoiseKind::GaussianPoisson => spec.beta,
    };
    let eta_norm = b
        .iter()
        .zip(b_exact)
        .map(|(b, e)| (b - beta - e) * (b - beta - e))
        .sum::<f64>()
        .sqrt();
    let level = if exact_norm > 0.0 {
        eta_norm / exact_norm
    } else {
        0.0
    };
    Ok(NoisyData { b, eta_norm, level })
}
