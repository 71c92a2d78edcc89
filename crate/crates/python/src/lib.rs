//! Python bindings for the `nnkrylov` solvers, problems and experiment
//! runner. Vectors cross the boundary as lists of floats.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nnkrylov::baselines::BaselineKind;
use nnkrylov::covariance::{run_cp_nn_fcgls, CovarianceKind, NoiseParams};
use nnkrylov::fcgls::{run_fcgls, IdentityPreconditioner};
use nnkrylov::harness::{emit_outputs, history_csv, preset, run_experiment, PRESETS};
use nnkrylov::history::RunHistory;
use nnkrylov::linop::{gaussian_psf, Conv2dPsf, CsrMatrix, DenseMatrix, LinearMap, LinearOperator};
use nnkrylov::nn::{default_initial_guess, run_nn_fcgls};
use nnkrylov::noise::{corrupt, NoiseSpec};
use nnkrylov::problems::{paralleltomo_matrix, ray_offsets, ProblemInstance};
use nnkrylov::stopping::StopPolicy;
use nnkrylov::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Precondition(_)
        | Error::Dimension { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A linear operator `A`: dense, sparse, 2-D periodic convolution or a
/// parallel-beam tomography matrix.
#[pyclass(name = "Operator", module = "nnkrylov_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyOperator {
    inner: LinearOperator,
}

#[pymethods]
impl PyOperator {
    /// Row-major dense matrix.
    #[staticmethod]
    fn dense(rows: usize, cols: usize, data: Vec<f64>) -> PyResult<Self> {
        let m = DenseMatrix::new(rows, cols, data).map_err(to_py)?;
        Ok(PyOperator {
            inner: LinearOperator::Dense(m),
        })
    }

    /// Sparse matrix from `(row, col, value)` triplets; duplicates are summed.
    #[staticmethod]
    fn sparse(rows: usize, cols: usize, triplets: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        let m = CsrMatrix::from_triplets(rows, cols, &triplets).map_err(to_py)?;
        Ok(PyOperator {
            inner: LinearOperator::Sparse(m),
        })
    }

    /// Periodic convolution of a `rows × cols` image with a row-major PSF
    /// summing to one.
    #[staticmethod]
    fn conv2d(
        rows: usize,
        cols: usize,
        psf_rows: usize,
        psf_cols: usize,
        psf: Vec<f64>,
    ) -> PyResult<Self> {
        let c = Conv2dPsf::new(rows, cols, psf_rows, psf_cols, psf).map_err(to_py)?;
        Ok(PyOperator {
            inner: LinearOperator::Conv2d(c),
        })
    }

    /// Periodic blur by a normalized Gaussian PSF of the given width.
    #[staticmethod]
    #[pyo3(signature = (rows, cols, sigma, size=None))]
    fn gaussian_blur(rows: usize, cols: usize, sigma: f64, size: Option<usize>) -> PyResult<Self> {
        let size = size.unwrap_or_else(|| 2 * (3.0 * sigma).ceil() as usize + 1);
        let (pr, pc) = (size.min(rows), size.min(cols));
        Self::conv2d(rows, cols, pr, pc, gaussian_psf(pr, pc, sigma))
    }

    /// Parallel-beam projections of an `n × n` image at the given angles
    /// (degrees), `rays` rays per angle at unit spacing.
    #[staticmethod]
    fn paralleltomo(n: usize, angles: Vec<f64>, rays: usize) -> PyResult<Self> {
        let m = paralleltomo_matrix(n, &angles, &ray_offsets(rays, 1.0)).map_err(to_py)?;
        Ok(PyOperator {
            inner: LinearOperator::Sparse(m),
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.rows(), self.inner.cols())
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply(&x).map_err(to_py)
    }

    fn apply_transpose(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply_transpose(&y).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let kind = match &self.inner {
            LinearOperator::Dense(_) => "dense",
            LinearOperator::Sparse(_) => "sparse",
            LinearOperator::Conv2d(_) => "conv2d",
            LinearOperator::Diagonal(_) => "diagonal",
            LinearOperator::Weighted { .. } => "weighted",
        };
        format!(
            "Operator({kind}, {}x{})",
            self.inner.rows(),
            self.inner.cols()
        )
    }
}

/// Iteration history of one solver run.
#[pyclass(name = "History", module = "nnkrylov_py", frozen)]
struct PyHistory {
    inner: RunHistory,
}

#[pymethods]
impl PyHistory {
    #[getter]
    fn solver(&self) -> String {
        self.inner.solver.clone()
    }

    /// Final iterate.
    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x.clone()
    }

    #[getter]
    fn residual_norms(&self) -> Vec<f64> {
        self.inner.residual_norms()
    }

    /// Relative errors per iteration, empty when no truth was given.
    #[getter]
    fn relative_errors(&self) -> Vec<f64> {
        self.inner
            .records
            .iter()
            .filter_map(|r| r.relative_error)
            .collect()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.records.last().map_or(0, |r| r.m)
    }

    #[getter]
    fn termination(&self) -> String {
        format!("{:?}", self.inner.termination)
    }

    #[getter]
    fn discrepancy_iteration(&self) -> Option<usize> {
        self.inner.discr_fired_at
    }

    #[getter]
    fn stabilization_iteration(&self) -> Option<usize> {
        self.inner.stab_fired_at
    }

    /// `(error, iteration)` of the smallest relative error.
    fn min_relative_error(&self) -> Option<(f64, usize)> {
        self.inner.min_relative_error()
    }

    /// The history in the CSV format written by the experiment runner.
    fn to_csv(&self) -> String {
        history_csv(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "History({}, {} iterations, {})",
            self.inner.solver,
            self.iterations(),
            self.termination()
        )
    }
}

/// A test problem with its ground truth and one noise realization.
#[pyclass(name = "Problem", module = "nnkrylov_py", frozen)]
struct PyProblem {
    inner: ProblemInstance,
}

#[pymethods]
impl PyProblem {
    /// The problem of a preset with noise drawn from `seed`.
    #[staticmethod]
    #[pyo3(signature = (name, seed=1))]
    fn from_preset(name: &str, seed: u64) -> PyResult<Self> {
        let cfg = preset(name).map_err(to_py)?;
        let inner = cfg
            .problem
            .build(&NoiseSpec { seed, ..cfg.noise })
            .map_err(to_py)?;
        Ok(PyProblem { inner })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(PyProblem {
            inner: ProblemInstance::load(&dir).map_err(to_py)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(&dir).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn operator(&self) -> PyOperator {
        PyOperator {
            inner: self.inner.op.clone(),
        }
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b.clone()
    }

    #[getter]
    fn b_exact(&self) -> Vec<f64> {
        self.inner.b_exact.clone()
    }

    #[getter]
    fn x_exact(&self) -> Vec<f64> {
        self.inner.x_exact.clone()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape
    }

    #[getter]
    fn noise_level(&self) -> f64 {
        self.inner.noise_level
    }
}

#[allow(clippy::too_many_arguments)]
fn solver_setup(
    op: &PyOperator,
    b: &[f64],
    x0: Option<Vec<f64>>,
    budget: usize,
    m_hat: usize,
    m_max_in: usize,
    tau: f64,
    theta: f64,
    noise_level: Option<f64>,
    stop: bool,
) -> PyResult<(Vec<f64>, nnkrylov::fcgls::SolverConfig, StopPolicy)> {
    let x0 = match x0 {
        Some(x) => x,
        None => default_initial_guess(&op.inner, b).map_err(to_py)?,
    };
    let cfg = nnkrylov::fcgls::SolverConfig {
        m_max: budget,
        m_hat,
        m_max_in,
        tau,
        theta,
        noise_level,
        ..Default::default()
    };
    let policy = StopPolicy {
        rule: cfg.stop_rule(),
        continue_past_stop: !stop,
        use_weighted_residual: false,
    };
    Ok((x0, cfg, policy))
}

/// Nonnegative flexible CGLS with restarts.
///
/// With `stop=False` the stop rules are only marked in the history and the
/// run continues to `budget`.
#[pyfunction]
#[pyo3(signature = (op, b, x0=None, budget=100, m_hat=20, m_max_in=20, tau=1e-4, theta=1.01, noise_level=None, truth=None, stop=false))]
#[allow(clippy::too_many_arguments)]
fn nn_fcgls(
    py: Python<'_>,
    op: &PyOperator,
    b: Vec<f64>,
    x0: Option<Vec<f64>>,
    budget: usize,
    m_hat: usize,
    m_max_in: usize,
    tau: f64,
    theta: f64,
    noise_level: Option<f64>,
    truth: Option<Vec<f64>>,
    stop: bool,
) -> PyResult<PyHistory> {
    let (x0, cfg, policy) = solver_setup(
        op,
        &b,
        x0,
        budget,
        m_hat,
        m_max_in,
        tau,
        theta,
        noise_level,
        stop,
    )?;
    let run = py
        .detach(|| run_nn_fcgls(&op.inner, &b, &x0, &cfg, &policy, truth.as_deref()))
        .map_err(to_py)?;
    Ok(PyHistory { inner: run.history })
}

/// NN-FCGLS weighted by the mixed Poisson-Gaussian covariance.
/// `covariance` is `"fixed"` (from the data) or `"restart"` (refreshed at
/// every restart). `b` is the raw data including the background `beta`.
#[pyfunction]
#[pyo3(signature = (op, b, sigma, beta, covariance="restart", x0=None, budget=100, m_hat=20, m_max_in=20, tau=1e-4, theta=1.01, noise_level=None, truth=None, stop=false))]
#[allow(clippy::too_many_arguments)]
fn cp_nn_fcgls(
    py: Python<'_>,
    op: &PyOperator,
    b: Vec<f64>,
    sigma: f64,
    beta: f64,
    covariance: &str,
    x0: Option<Vec<f64>>,
    budget: usize,
    m_hat: usize,
    m_max_in: usize,
    tau: f64,
    theta: f64,
    noise_level: Option<f64>,
    truth: Option<Vec<f64>>,
    stop: bool,
) -> PyResult<PyHistory> {
    let kind = match covariance {
        "fixed" => CovarianceKind::FixedFromData,
        "restart" => CovarianceKind::RestartDependent,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown covariance kind {other:?}"
            )))
        }
    };
    let b_beta: Vec<f64> = b.iter().map(|v| v - beta).collect();
    let (x0, cfg, policy) = solver_setup(
        op,
        &b_beta,
        x0,
        budget,
        m_hat,
        m_max_in,
        tau,
        theta,
        noise_level,
        stop,
    )?;
    let noise = NoiseParams { sigma, beta };
    let run = py
        .detach(|| {
            run_cp_nn_fcgls(
                &op.inner,
                &b,
                noise,
                &x0,
                kind,
                &cfg,
                &policy,
                truth.as_deref(),
            )
        })
        .map_err(to_py)?;
    Ok(PyHistory { inner: run.history })
}

/// Unpreconditioned flexible CGLS (`L = I`), untruncated by default.
#[pyfunction]
#[pyo3(signature = (op, b, x0=None, budget=100, m_hat=None, truth=None))]
fn fcgls(
    py: Python<'_>,
    op: &PyOperator,
    b: Vec<f64>,
    x0: Option<Vec<f64>>,
    budget: usize,
    m_hat: Option<usize>,
    truth: Option<Vec<f64>>,
) -> PyResult<PyHistory> {
    let x0 = x0.unwrap_or_else(|| vec![0.0; op.inner.cols()]);
    let cfg = nnkrylov::fcgls::SolverConfig {
        m_max: budget,
        m_hat: m_hat.unwrap_or(budget.max(1)),
        ..Default::default()
    };
    let h = py
        .detach(|| {
            run_fcgls(
                &op.inner,
                &b,
                &mut IdentityPreconditioner,
                &x0,
                &cfg,
                &StopPolicy::never(),
                truth.as_deref(),
            )
        })
        .map_err(to_py)?;
    Ok(PyHistory { inner: h })
}

/// Any comparison solver by its command-line name, e.g. `"mrnsd"`,
/// `"mfista(0.2)"` or `"cimmino"`. Weighted MRNSD variants need `sigma`
/// and `beta` and take the raw data.
#[pyfunction]
#[pyo3(signature = (name, op, b, x0=None, budget=100, sigma=None, beta=0.0, truth=None, m_max_in=20))]
#[allow(clippy::too_many_arguments)]
fn baseline(
    py: Python<'_>,
    name: &str,
    op: &PyOperator,
    b: Vec<f64>,
    x0: Option<Vec<f64>>,
    budget: usize,
    sigma: Option<f64>,
    beta: f64,
    truth: Option<Vec<f64>>,
    m_max_in: usize,
) -> PyResult<PyHistory> {
    let kind = BaselineKind::from_name(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown solver {name:?}")))?;
    let noise = sigma.map(|sigma| NoiseParams { sigma, beta });
    let b_beta: Vec<f64> = b.iter().map(|v| v - beta).collect();
    let data = if kind.needs_noise() { &b } else { &b_beta };
    let x0 = match x0 {
        Some(x) => x,
        None => default_initial_guess(&op.inner, &b_beta).map_err(to_py)?,
    };
    let cfg = nnkrylov::fcgls::SolverConfig {
        m_max: budget,
        m_max_in,
        ..Default::default()
    };
    let h = py
        .detach(|| {
            kind.run(
                &op.inner,
                data,
                noise,
                &x0,
                &cfg,
                &StopPolicy::never(),
                truth.as_deref(),
            )
        })
        .map_err(to_py)?;
    Ok(PyHistory { inner: h })
}

/// Noisy copy of `b_exact`. With `level` the Gaussian noise is scaled to
/// that relative norm; otherwise `sigma` and `beta` give mixed
/// Poisson-Gaussian noise. Returns `(b, realized_level)`.
#[pyfunction]
#[pyo3(signature = (b_exact, seed, level=None, sigma=0.0, beta=0.0))]
fn add_noise(
    b_exact: Vec<f64>,
    seed: u64,
    level: Option<f64>,
    sigma: f64,
    beta: f64,
) -> PyResult<(Vec<f64>, f64)> {
    let spec = match level {
        Some(l) => NoiseSpec::gaussian_level(l, seed),
        None => NoiseSpec::gaussian_poisson(sigma, beta, seed),
    };
    let noisy = corrupt(&b_exact, &spec).map_err(to_py)?;
    Ok((noisy.b, noisy.level))
}

/// `(solver, mean min relative error, mean iterations to reach it)`
type SolverMeans = (String, Option<f64>, Option<f64>);

/// Runs a preset and returns per-solver means of
/// `(min_rel_error, iterations)`; writes the usual outputs when `out` is given.
#[pyfunction]
#[pyo3(signature = (name, budget=None, seeds=None, solvers=None, out=None))]
fn run_preset(
    py: Python<'_>,
    name: &str,
    budget: Option<usize>,
    seeds: Option<Vec<u64>>,
    solvers: Option<&str>,
    out: Option<PathBuf>,
) -> PyResult<Vec<SolverMeans>> {
    let mut cfg = preset(name).map_err(to_py)?;
    if let Some(b) = budget {
        cfg.budget = b;
    }
    if let Some(s) = seeds {
        cfg.seeds = s;
        cfg.repetitions = None;
    }
    if let Some(list) = solvers {
        cfg.solvers = nnkrylov::harness::SolverSpec::parse_list(list).map_err(to_py)?;
    }
    let report = py.detach(|| run_experiment(&cfg)).map_err(to_py)?;
    if let Some(dir) = out {
        emit_outputs(&report, &dir).map_err(to_py)?;
    }
    Ok(report
        .aggregates
        .iter()
        .map(|a| (a.solver.clone(), a.min_rel_error, a.iterations))
        .collect())
}

#[pymodule]
fn nnkrylov_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOperator>()?;
    m.add_class::<PyHistory>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(nn_fcgls, m)?)?;
    m.add_function(wrap_pyfunction!(cp_nn_fcgls, m)?)?;
    m.add_function(wrap_pyfunction!(fcgls, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add("PRESETS", PRESETS.to_vec())?;
    Ok(())
}
