//! Experiment configuration: the TOML schema and the built-in presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, PMRNSD_THRESHOLD};
use crate::covariance::NoiseParams;
use crate::error::{Error, Result};
use crate::fcgls::SolverConfig;
use crate::linop::{DenseMatrix, LinearOperator};
use crate::noise::{NoiseKind, NoiseSpec};
use crate::problems::{
    angle_range, default_rays, make_deblur_1d, make_paralleltomo, make_satellite_like,
    make_starfield, ProblemInstance,
};

/// Which test problem to build. The noise is configured separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    Deblur1d {
        n: usize,
        blur_sigma: f64,
    },
    Starfield {
        n: usize,
        n_stars: usize,
        psf_sigma: f64,
        /// Constant sky level added to every pixel.
        #[serde(default)]
        background: f64,
        /// Seed for the star positions; fixed across repetitions.
        #[serde(default)]
        star_seed: u64,
    },
    Satellite {
        n: usize,
        psf_sigma: f64,
        scale: f64,
    },
    Paralleltomo {
        n: usize,
        /// `[start, step, stop]` in degrees.
        angles: [f64; 3],
        /// Rays per angle; defaults to `round(√2 n)`.
        #[serde(default)]
        rays: Option<usize>,
    },
    /// Explicit dense matrix (row-major) and exact solution.
    Dense {
        rows: usize,
        cols: usize,
        matrix: Vec<f64>,
        x_exact: Vec<f64>,
    },
    /// A problem previously written with [`ProblemInstance::save`]; its
    /// exact data is reused and only the noise is redrawn.
    Saved {
        dir: PathBuf,
    },
}

impl ProblemSpec {
    /// Builds the problem with the given noise.
    pub fn build(&self, noise: &NoiseSpec) -> Result<ProblemInstance> {
        match self {
            ProblemSpec::Deblur1d { n, blur_sigma } => make_deblur_1d(*n, *blur_sigma, noise),
            ProblemSpec::Starfield {
                n,
                n_stars,
                psf_sigma,
                background,
                star_seed,
            } => make_starfield(*n, *n_stars, *background, *psf_sigma, noise, *star_seed),
            ProblemSpec::Satellite {
                n,
                psf_sigma,
                scale,
            } => make_satellite_like(*n, *psf_sigma, *scale, noise),
            ProblemSpec::Paralleltomo { n, angles, rays } => {
                let [start, step, stop] = *angles;
                if !(step > 0.0) || !(stop >= start) {
                    return Err(Error::Config(format!(
                        "bad angle range {start}:{step}:{stop}"
                    )));
                }
                make_paralleltomo(
                    *n,
                    &angle_range(start, step, stop),
                    rays.unwrap_or(default_rays(*n)),
                    noise,
                )
            }
            ProblemSpec::Dense {
                rows,
                cols,
                matrix,
                x_exact,
            } => {
                let a = DenseMatrix::new(*rows, *cols, matrix.clone())?;
                ProblemInstance::from_truth(
                    "dense",
                    LinearOperator::Dense(a),
                    (*cols, 1),
                    x_exact.clone(),
                    noise,
                )
            }
            ProblemSpec::Saved { dir } => ProblemInstance::load(dir)?.with_noise(noise),
        }
    }
}

/// Starting point shared by all solvers of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    /// `max(b, 0)` for square operators, `max(Aᵀb, 0)` otherwise.
    #[default]
    Default,
    /// All zeros; the flexible and MRNSD-type solvers take their first
    /// step with the identity in place of `diag(x)`.
    Zero,
    ProjectedData,
    ProjectedAdjoint,
}

/// The flexible solvers of this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FlexibleKind {
    NnFcgls,
    /// Covariance fixed from the data.
    CpNnFcgls,
    /// Covariance refreshed at every restart.
    CpNnFcglsK,
}

/// One entry of the solver list. In TOML either a bare name
/// (`"mrnsd"`) or a table with `kind` and parameters
/// (`{ kind = "mfista", t_inv = 0.2 }`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SolverRepr", into = "SolverRepr")]
pub enum SolverSpec {
    Flexible(FlexibleKind),
    Baseline(BaselineKind),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SolverRepr {
    Name(String),
    Flexible(FlexibleKind),
    Baseline(BaselineKind),
}

impl TryFrom<SolverRepr> for SolverSpec {
    type Error = String;

    fn try_from(r: SolverRepr) -> std::result::Result<Self, String> {
        match r {
            SolverRepr::Name(n) => {
                SolverSpec::from_name(&n).ok_or_else(|| format!("unknown solver {n:?}"))
            }
            SolverRepr::Flexible(f) => Ok(SolverSpec::Flexible(f)),
            SolverRepr::Baseline(b) => Ok(SolverSpec::Baseline(b)),
        }
    }
}

impl From<SolverSpec> for SolverRepr {
    fn from(s: SolverSpec) -> Self {
        match s {
            SolverSpec::Flexible(f) => SolverRepr::Flexible(f),
            SolverSpec::Baseline(b) => SolverRepr::Baseline(b),
        }
    }
}

impl SolverSpec {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "nn-fcgls" => SolverSpec::Flexible(FlexibleKind::NnFcgls),
            "cp-nn-fcgls" => SolverSpec::Flexible(FlexibleKind::CpNnFcgls),
            "cp-nn-fcgls-k" => SolverSpec::Flexible(FlexibleKind::CpNnFcglsK),
            other => SolverSpec::Baseline(BaselineKind::from_name(other)?),
        })
    }

    /// Label used in output file names and tables; includes the step
    /// parameter of FISTA variants and Cimmino when given explicitly.
    pub fn label(&self) -> String {
        match self {
            SolverSpec::Flexible(FlexibleKind::NnFcgls) => "nn-fcgls".into(),
            SolverSpec::Flexible(FlexibleKind::CpNnFcgls) => "cp-nn-fcgls".into(),
            SolverSpec::Flexible(FlexibleKind::CpNnFcglsK) => "cp-nn-fcgls-k".into(),
            SolverSpec::Baseline(
                b @ (BaselineKind::Fista { t_inv: Some(t) }
                | BaselineKind::Mfista { t_inv: Some(t) }),
            ) => {
                format!("{}({t})", b.name())
            }
            SolverSpec::Baseline(BaselineKind::Cimmino {
                relaxation: Some(l),
            }) => format!("cimmino({l})"),
            SolverSpec::Baseline(BaselineKind::Pmrnsd { threshold })
                if *threshold != PMRNSD_THRESHOLD =>
            {
                format!("pmrnsd({threshold})")
            }
            SolverSpec::Baseline(b) => b.name().into(),
        }
    }

    pub fn needs_noise(&self) -> bool {
        match self {
            SolverSpec::Flexible(FlexibleKind::NnFcgls) => false,
            SolverSpec::Flexible(_) => true,
            SolverSpec::Baseline(b) => b.needs_noise(),
        }
    }

    /// Parses a comma-separated list of solver names.
    pub fn parse_list(list: &str) -> Result<Vec<SolverSpec>> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                SolverSpec::from_name(s)
                    .ok_or_else(|| Error::Config(format!("unknown solver {s:?}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub problem: ProblemSpec,
    /// Noise model; its `seed` is replaced by each entry of `seeds`.
    #[serde(default)]
    pub noise: NoiseSpec,
    pub solvers: Vec<SolverSpec>,
    /// Total iterations per run, inner iterations across restarts included.
    pub budget: usize,
    /// Must equal the number of seeds when given.
    #[serde(default)]
    pub repetitions: Option<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Shared solver parameters; `m_max` is overridden by `budget`. When
    /// `noise_level` is unset, each run uses its realized noise level.
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub initial_guess: InitialGuess,
    /// Keep iterating after a stop rule fires, only marking it.
    #[serde(default = "yes")]
    pub continue_past_stop: bool,
    /// Feed the covariance-weighted residual to the stop rules of weighted
    /// solvers.
    #[serde(default)]
    pub use_weighted_residual: bool,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.repetitions {
            if r != self.seeds.len() {
                return Err(Error::Config(format!(
                    "repetitions = {r} but {} seeds given",
                    self.seeds.len()
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        let mut labels: Vec<String> = self.solvers.iter().map(SolverSpec::label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.solvers.len() {
            return Err(Error::Config("solver list has duplicates".into()));
        }
        for s in &self.solvers {
            if let SolverSpec::Baseline(b) = s {
                b.validate()?;
            }
        }
        self.noise.validate()?;
        self.solver_config(None).validate()
    }

    /// Solver parameters for one run given that run's realized noise level.
    pub fn solver_config(&self, realized_level: Option<f64>) -> SolverConfig {
        SolverConfig {
            m_max: self.budget,
            noise_level: self.solver.noise_level.or(realized_level),
            ..self.solver.clone()
        }
    }

    /// Noise parameters handed to covariance-aware solvers.
    pub fn noise_params(&self, p: &ProblemInstance) -> NoiseParams {
        match p.noise.kind {
            NoiseKind::GaussianPoisson => NoiseParams {
                sigma: p.noise.sigma,
                beta: p.noise.beta,
            },
            // Gaussian only: the per-entry deviation implied by the realized
            // noise norm.
            NoiseKind::GaussianOnly => NoiseParams {
                sigma: p.eta_norm / (p.b.len().max(1) as f64).sqrt(),
                beta: 0.0,
            },
        }
    }
}

pub const PRESETS: [&str; 6] = [
    "deblur1d",
    "starfield64",
    "satellite64",
    "satellite64-poisson",
    "tomo64-over",
    "tomo64-under",
];

fn names(list: &[&str]) -> Vec<SolverSpec> {
    list.iter()
        .map(|n| SolverSpec::from_name(n).expect("preset solver names are valid"))
        .collect()
}

fn deblur_solver() -> SolverConfig {
    SolverConfig {
        m_hat: 20,
        m_max_in: 20,
        tau: 1e-4,
        ..SolverConfig::default()
    }
}

fn tomo_solver() -> SolverConfig {
    SolverConfig {
        m_hat: 10,
        m_max_in: 10,
        tau: 1e-2,
        ..SolverConfig::default()
    }
}

/// Built-in experiment setups.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let gaussian = |level| NoiseSpec::gaussian_level(level, 0);
    let deblur_solvers = names(&[
        "nn-fcgls",
        "rest-nncg",
        "fista",
        "mfista",
        "mrnsd",
        "pmrnsd",
        "nnsd",
        "naive-nncg",
    ]);
    let tomo_solvers = names(&[
        "nn-fcgls",
        "rest-nncg",
        "mfista",
        "mrnsd",
        "nnsd",
        "cimmino",
    ]);
    let cfg = |problem, noise, solvers, budget, seeds: &[u64], solver| ExperimentConfig {
        name: name.to_string(),
        problem,
        noise,
        solvers,
        budget,
        repetitions: None,
        seeds: seeds.to_vec(),
        output_dir: None,
        solver,
        initial_guess: InitialGuess::Default,
        continue_past_stop: true,
        use_weighted_residual: false,
    };
    let five = [1, 2, 3, 4, 5];
    Ok(match name {
        "deblur1d" => cfg(
            ProblemSpec::Deblur1d {
                n: 256,
                blur_sigma: 4.0,
            },
            gaussian(1e-2),
            names(&[
                "nn-fcgls",
                "rest-nncg",
                "mfista",
                "mrnsd",
                "nnsd",
                "naive-nncg",
                "cgls",
            ]),
            200,
            &five,
            deblur_solver(),
        ),
        "starfield64" => cfg(
            ProblemSpec::Starfield {
                n: 64,
                n_stars: 40,
                psf_sigma: 1.25,
                background: 10.0,
                star_seed: 7,
            },
            gaussian(1e-2),
            deblur_solvers,
            200,
            &five,
            deblur_solver(),
        ),
        "satellite64" => cfg(
            ProblemSpec::Satellite {
                n: 64,
                psf_sigma: 2.0,
                scale: 1.0,
            },
            gaussian(1e-1),
            deblur_solvers,
            200,
            &five,
            deblur_solver(),
        ),
        "satellite64-poisson" => cfg(
            ProblemSpec::Satellite {
                n: 64,
                psf_sigma: 3.0,
                scale: 2.0e4,
            },
            NoiseSpec::gaussian_poisson(20.0, 60.0, 0),
            names(&[
                "cp-nn-fcgls",
                "cp-nn-fcgls-k",
                "nn-fcgls",
                "wmrnsd",
                "kwmrnsd",
                "mrnsd",
            ]),
            300,
            &[1, 2, 3],
            deblur_solver(),
        ),
        "tomo64-over" => ExperimentConfig {
            initial_guess: InitialGuess::Zero,
            ..cfg(
                ProblemSpec::Paralleltomo {
                    n: 64,
                    angles: [0.0, 2.0, 178.0],
                    rays: Some(91),
                },
                gaussian(5e-2),
                tomo_solvers.clone(),
                100,
                &five,
                tomo_solver(),
            )
        },
        "tomo64-under" => ExperimentConfig {
            initial_guess: InitialGuess::Zero,
            ..cfg(
                ProblemSpec::Paralleltomo {
                    n: 64,
                    angles: [0.0, 5.0, 175.0],
                    rays: Some(95),
                },
                gaussian(5e-2),
                tomo_solvers,
                100,
                &five,
                tomo_solver(),
            )
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; available: {}",
                PRESETS.join(", ")
            )))
        }
    })
}
