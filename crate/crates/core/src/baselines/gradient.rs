//! Projected gradient methods and the largest singular value estimate used
//! to pick their step size.
//!
//! The objective is `Φ(x) = ‖A x - b‖²` with gradient `2 Aᵀ(A x - b)`, whose
//! Lipschitz constant is `2 σ₁²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fcgls::SolverConfig;
use crate::history::{Recorder, RunHistory, Sample, Termination};
use crate::linop::{CountingMap, LinearMap};
use crate::stopping::StopPolicy;
use crate::vector::{axpy, dot, is_nonneg, norm2, project_nonneg};

/// Golub-Kahan steps used for the default step size.
pub const SIGMA1_ITERS: usize = 5;

fn check_x0(op: &dyn LinearMap, b: &[f64], x0: &[f64]) -> Result<()> {
    check_len("initial guess", op.cols(), x0.len())?;
    check_len("data", op.rows(), b.len())?;
    if !is_nonneg(x0) {
        return Err(Error::Precondition(
            "initial guess must be nonnegative".into(),
        ));
    }
    Ok(())
}

fn residual(b: &[f64], ax: &[f64]) -> Vec<f64> {
    b.iter().zip(ax).map(|(b, a)| b - a).collect()
}

/// Projected steepest descent: `x ← P₊(x + α z)`, `z = Aᵀ(b - A x)`,
/// `α = ‖z‖² / ‖A z‖²`.
pub fn run_nnsd(
    op: &dyn LinearMap,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<RunHistory> {
    check_x0(op, b, x0)?;
    let op = CountingMap::new(op);
    let b_norm = norm2(b);
    let zero_tol = cfg.zero_tol_for(b_norm);
    let mut rec = Recorder::new("nnsd", b_norm, None, stop, truth)?;
    let mut x = x0.to_vec();
    let mut ax = op.apply(&x)?;
    let mut r = residual(b, &ax);
    let mut z = vec![0.0; x.len()];
    let mut az = vec![0.0; r.len()];
    let mut stopped = rec.record(Sample {
        x: &x,
        residual_norm: norm2(&r),
        weighted_residual_norm: None,
        alpha: 0.0,
        outer_k: 0,
        applies: op.total_calls(),
    })?;
    let mut termination = Termination::Budget;
    let mut m = 0;
    while !stopped && m < cfg.m_max {
        op.apply_transpose_into(&r, &mut z);
        let zz = dot(&z, &z);
        if zz.sqrt() <= zero_tol {
            termination = Termination::Converged;
            break;
        }
        op.apply_into(&z, &mut az);
        let azz = dot(&az, &az);
        if azz <= zero_tol * zero_tol {
            return Err(Error::ZeroDirection {
                iteration: m + 1,
                norm_sq: azz,
            });
        }
        let alpha = zz / azz;
        axpy(alpha, &z, &mut x);
        project_nonneg(&mut x);
        op.apply_into(&x, &mut ax);
        r = residual(b, &ax);
        m += 1;
        stopped = rec.record(Sample {
            x: &x,
            residual_norm: norm2(&r),
            weighted_residual_norm: None,
            alpha,
            outer_k: 0,
            applies: op.total_calls(),
        })?;
    }
    Ok(rec.finish(x, termination))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FistaParams {
    /// Inverse step size (Lipschitz estimate of the gradient); required
    /// without backtracking, the starting guess with it.
    pub t_inv: Option<f64>,
    pub backtrack: bool,
    /// Growth factor of the Lipschitz estimate during backtracking.
    pub eta: f64,
    /// Keep the objective monotone by rejecting worse iterates.
    pub monotone: bool,
}

impl FistaParams {
    pub fn fista(t_inv: f64) -> Self {
        FistaParams {
            t_inv: Some(t_inv),
            backtrack: false,
            eta: 2.0,
            monotone: false,
        }
    }

    pub fn mfista(t_inv: Option<f64>) -> Self {
        FistaParams {
            t_inv,
            backtrack: true,
            eta: 2.0,
            monotone: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.t_inv {
            Some(t) if !(t > 0.0 && t.is_finite()) => Err(Error::Config(format!(
                "inverse step size must be positive, got {t}"
            ))),
            None if !self.backtrack => Err(Error::Config(
                "an inverse step size is required without backtracking".into(),
            )),
            _ if self.backtrack && !(self.eta > 1.0) => Err(Error::Config(format!(
                "backtracking factor must exceed 1, got {}",
                self.eta
            ))),
            _ => Ok(()),
        }
    }
}

/// Accepted point `P₊(y - ∇Φ(y)/L)` and its image under `A`.
struct ProxStep {
    x: Vec<f64>,
    ax: Vec<f64>,
}

/// Accelerated projected gradient, optionally monotone and with
/// backtracking. `A y` is formed by linearity from stored products, so an
/// iteration costs one `Aᵀ` product plus one `A` product per trial step.
pub fn run_fista(
    op: &dyn LinearMap,
    b: &[f64],
    x0: &[f64],
    params: FistaParams,
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<RunHistory> {
    params.validate()?;
    check_x0(op, b, x0)?;
    let name = if params.monotone { "mfista" } else { "fista" };
    let op = CountingMap::new(op);
    let b_norm = norm2(b);
    let mut rec = Recorder::new(name, b_norm, None, stop, truth)?;
    let phi = |ax: &[f64]| -> f64 { b.iter().zip(ax).map(|(b, a)| (a - b) * (a - b)).sum() };

    let mut lip = params.t_inv.unwrap_or(1.0);
    let mut x = x0.to_vec();
    let mut ax = op.apply(&x)?;
    let mut phi_x = phi(&ax);
    let mut y = x.clone();
    let mut ay = ax.clone();
    let mut t = 1.0f64;
    let mut grad = vec![0.0; x.len()];

    let mut stopped = rec.record(Sample {
        x: &x,
        residual_norm: phi_x.sqrt(),
        weighted_residual_norm: None,
        alpha: 1.0 / lip,
        outer_k: 0,
        applies: op.total_calls(),
    })?;
    let mut m = 0;
    while !stopped && m < cfg.m_max {
        let ry: Vec<f64> = ay.iter().zip(b).map(|(a, b)| 2.0 * (a - b)).collect();
        op.apply_transpose_into(&ry, &mut grad);
        let phi_y = phi(&ay);

        let z = loop {
            let mut zx: Vec<f64> = y.iter().zip(&grad).map(|(y, g)| y - g / lip).collect();
            project_nonneg(&mut zx);
            let az = op.apply(&zx)?;
            if !params.backtrack {
                break ProxStep { x: zx, ax: az };
            }
            let diff: Vec<f64> = zx.iter().zip(&y).map(|(z, y)| z - y).collect();
            let bound = phi_y + dot(&diff, &grad) + 0.5 * lip * dot(&diff, &diff);
            let phi_z = phi(&az);
            if phi_z <= bound * (1.0 + 1e-12) + f64::MIN_POSITIVE {
                break ProxStep { x: zx, ax: az };
            }
            lip *= params.eta;
        };

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let phi_z = phi(&z.ax);
        let (x_new, ax_new, phi_new) = if params.monotone && phi_z > phi_x {
            (x.clone(), ax.clone(), phi_x)
        } else {
            (z.x.clone(), z.ax.clone(), phi_z)
        };
        // y = x_k + (t/t')(z - x_k) + ((t - 1)/t')(x_k - x_{k-1})
        let c_z = if params.monotone { t / t_next } else { 0.0 };
        let c_m = (t - 1.0) / t_next;
        for i in 0..y.len() {
            y[i] = x_new[i] + c_z * (z.x[i] - x_new[i]) + c_m * (x_new[i] - x[i]);
        }
        for i in 0..ay.len() {
            ay[i] = ax_new[i] + c_z * (z.ax[i] - ax_new[i]) + c_m * (ax_new[i] - ax[i]);
        }
        x = x_new;
        ax = ax_new;
        phi_x = phi_new;
        t = t_next;
        m += 1;
        stopped = rec.record(Sample {
            x: &x,
            residual_norm: phi_x.sqrt(),
            weighted_residual_norm: None,
            alpha: 1.0 / lip,
            outer_k: 0,
            applies: op.total_calls(),
        })?;
    }
    Ok(rec.finish(x, Termination::Budget))
}

/// Largest singular value of `iters` Golub-Kahan bidiagonalization steps from
/// a seeded Gaussian start vector. A lower bound on `σ₁(A)`.
pub fn estimate_sigma1(op: &dyn LinearMap, iters: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..op.rows())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    estimate_sigma1_from(op, iters, &start)
}

/// [`estimate_sigma1`] from an explicit start vector in the range space.
pub fn estimate_sigma1_from(op: &dyn LinearMap, iters: usize, start: &[f64]) -> Result<f64> {
    if iters < 1 {
        return Err(Error::Config(
            "bidiagonalization needs at least one step".into(),
        ));
    }
    check_len("bidiagonalization start", op.rows(), start.len())?;
    let beta1 = norm2(start);
    if beta1 == 0.0 {
        return Err(Error::Seed);
    }
    let mut u: Vec<f64> = start.iter().map(|v| v / beta1).collect();
    let mut us = vec![u.clone()];
    let mut vs: Vec<Vec<f64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut beta = 0.0;
    for _ in 0..iters {
        let mut v = op.apply_transpose(&u)?;
        if let Some(prev) = vs.last() {
            axpy(-beta, prev, &mut v);
        }
        reorthogonalize(&mut v, &vs);
        let alpha = norm2(&v);
        if alpha == 0.0 {
            break;
        }
        v.iter_mut().for_each(|e| *e /= alpha);
        let mut u_next = op.apply(&v)?;
        axpy(-alpha, &u, &mut u_next);
        reorthogonalize(&mut u_next, &us);
        beta = norm2(&u_next);
        alphas.push(alpha);
        betas.push(beta);
        vs.push(v);
        if beta == 0.0 {
            break;
        }
        u_next.iter_mut().for_each(|e| *e /= beta);
        u = u_next;
        us.push(u.clone());
    }
    Ok(bidiagonal_sigma_max(&alphas, &betas))
}

fn reorthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(v, q);
        axpy(-c, q, v);
    }
}

/// Largest singular value of the `(k+1) × k` lower bidiagonal matrix with
/// diagonal `alphas` and subdiagonal `betas`.
fn bidiagonal_sigma_max(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    if k == 0 {
        return 0.0;
    }
    // BᵀB is symmetric tridiagonal.
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        g[i * k + i] = alphas[i] * alphas[i] + betas[i] * betas[i];
        if i + 1 < k {
            let off = betas[i] * alphas[i + 1];
            g[i * k + i + 1] = off;
            g[(i + 1) * k + i] = off;
        }
    }
    symmetric_eigenvalues(&mut g, k)
        .into_iter()
        .fold(0.0, f64::max)
        .max(0.0)
        .sqrt()
}

/// Cyclic Jacobi eigenvalue iteration for a small dense symmetric matrix.
fn symmetric_eigenvalues(a: &mut [f64], n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{DenseMatrix, DiagonalOperator};

    fn cfg(m_max: usize) -> SolverConfig {
        SolverConfig {
            m_max,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn nnsd_projects_negative_data() {
        let a = DenseMatrix::identity(2);
        let h = run_nnsd(
            &a,
            &[1.0, -1.0],
            &[0.3, 0.3],
            &cfg(5),
            &StopPolicy::never(),
            None,
        )
        .unwrap();
        assert_eq!(h.x, vec![1.0, 0.0]);
    }

    #[test]
    fn fista_identity_converges() {
        let a = DenseMatrix::identity(3);
        let b = [1.0, 2.0, 3.0];
        let h = run_fista(
            &a,
            &b,
            &[0.0; 3],
            FistaParams::fista(2.0),
            &cfg(100),
            &StopPolicy::never(),
            Some(&b),
        )
        .unwrap();
        assert!(h.min_relative_error().unwrap().0 < 1e-8);
    }

    #[test]
    fn mfista_objective_is_monotone() {
        let a = DenseMatrix::from_rows(&[
            vec![1.0, 0.9, 0.0],
            vec![0.9, 1.0, 0.9],
            vec![0.0, 0.9, 1.0],
            vec![0.5, 0.5, 0.5],
        ])
        .unwrap();
        let b = [1.0, -0.5, 2.0, 0.3];
        let h = run_fista(
            &a,
            &b,
            &[0.0; 3],
            FistaParams::mfista(Some(0.1)),
            &cfg(60),
            &StopPolicy::never(),
            None,
        )
        .unwrap();
        for w in h.records.windows(2) {
            assert!(w[1].residual_norm <= w[0].residual_norm);
        }
    }

    #[test]
    fn fista_needs_step_or_backtracking() {
        let p = FistaParams {
            t_inv: None,
            backtrack: false,
            eta: 2.0,
            monotone: false,
        };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        assert!(FistaParams::fista(-1.0).validate().is_err());
    }

    #[test]
    fn sigma1_of_diagonal() {
        let a = DiagonalOperator::new(vec![3.0, 1.0]).unwrap();
        let s = estimate_sigma1_from(&a, 2, &[1.0, 1.0]).unwrap();
        assert!((s - 3.0).abs() < 1e-10, "{s}");
    }

    #[test]
    fn sigma1_of_scaled_identity() {
        let a = DiagonalOperator::new(vec![2.5; 6]).unwrap();
        let s = estimate_sigma1(&a, 1, 7).unwrap();
        assert!((s - 2.5).abs() < 1e-12, "{s}");
    }

    #[test]
    fn sigma1_zero_start_rejected() {
        let a = DenseMatrix::identity(2);
        assert!(matches!(
            estimate_sigma1_from(&a, 3, &[0.0, 0.0]),
            Err(Error::Seed)
        ));
    }

    #[test]
    fn jacobi_eigenvalues() {
        let mut a = vec![2.0, 1.0, 1.0, 2.0];
        let mut e = symmetric_eigenvalues(&mut a, 2);
        e.sort_by(f64::total_cmp);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }
}
