//! CGLS-based baselines: plain CGLS, CGLS restarted from projected iterates,
//! and CGLS with a projection after every step.

use crate::error::{check_len, Error, Result};
use crate::fcgls::{run_fcgls_named, IdentityPreconditioner, SolverConfig};
use crate::history::{Recorder, RunHistory, Sample, Termination};
use crate::linop::{CountingMap, LinearMap};
use crate::stopping::StopPolicy;
use crate::vector::{axpy, dot, norm2, project_nonneg};

/// Unconstrained CGLS: the flexible solver with `L = I` and the full
/// recurrence.
pub fn run_cgls(
    op: &dyn LinearMap,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<RunHistory> {
    let cfg = cfg.clone().untruncated();
    run_fcgls_named(
        op,
        b,
        &mut IdentityPreconditioner,
        x0,
        &cfg,
        stop,
        truth,
        "cgls",
    )
}

/// Textbook CGLS recurrences.
struct Cgls {
    x: Vec<f64>,
    r: Vec<f64>,
    s: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    gamma: f64,
}

impl Cgls {
    /// Starts at `x` (one `A` and one `Aᵀ` product).
    fn start(op: &dyn LinearMap, b: &[f64], x: Vec<f64>) -> Result<Self> {
        let ax = op.apply(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let s = op.apply_transpose(&r)?;
        let gamma = dot(&s, &s);
        Ok(Cgls {
            p: s.clone(),
            q: vec![0.0; r.len()],
            x,
            r,
            s,
            gamma,
        })
    }

    /// Returns the step length, or `None` when the normal-equation residual
    /// vanished.
    fn step_length(&mut self, op: &dyn LinearMap, tol: f64) -> Result<Option<f64>> {
        if self.gamma.sqrt() <= tol {
            return Ok(None);
        }
        op.apply_into(&self.p, &mut self.q);
        let qq = dot(&self.q, &self.q);
        if qq <= tol * tol {
            return Err(Error::ZeroDirection {
                iteration: 0,
                norm_sq: qq,
            });
        }
        Ok(Some(self.gamma / qq))
    }

    /// Residual and direction updates after the `x` update.
    fn finish_step(&mut self, op: &dyn LinearMap, alpha: f64) {
        axpy(-alpha, &self.q, &mut self.r);
        op.apply_transpose_into(&self.r, &mut self.s);
        let gamma_new = dot(&self.s, &self.s);
        let beta = gamma_new / self.gamma;
        self.gamma = gamma_new;
        for (p, s) in self.p.iter_mut().zip(&self.s) {
            *p = s + beta * *p;
        }
    }
}

fn check_x0(op: &dyn LinearMap, b: &[f64], x0: &[f64]) -> Result<()> {
    check_len("initial guess", op.cols(), x0.len())?;
    check_len("data", op.rows(), b.len())
}

/// CGLS restarted from the projection of its iterate onto the nonnegative
/// orthant whenever the discrepancy principle holds or `m_max_in` inner
/// iterations have run. The restart iterate is what gets recorded, so
/// logged iterates are nonnegative exactly at restarts.
pub fn run_rest_nncg(
    op: &dyn LinearMap,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<RunHistory> {
    cfg.validate()?;
    check_x0(op, b, x0)?;
    let op = CountingMap::new(op);
    let b_norm = norm2(b);
    let tol = cfg.zero_tol_for(b_norm);
    let target = cfg.noise_level.map(|e| cfg.theta * e * b_norm);
    let mut rec = Recorder::new("rest-nncg", b_norm, None, stop, truth)?;
    let mut x = x0.to_vec();
    project_nonneg(&mut x);
    let mut cg = Cgls::start(&op, b, x)?;
    let mut k = 1;
    let mut stopped = rec.record(Sample {
        x: &cg.x,
        residual_norm: norm2(&cg.r),
        weighted_residual_norm: None,
        alpha: 0.0,
        outer_k: k,
        applies: op.total_calls(),
    })?;
    let mut inner = 0;
    let mut m = 0;
    let mut termination = Termination::Budget;
    while !stopped && m < cfg.m_max {
        let Some(alpha) = cg.step_length(&op, tol)? else {
            termination = Termination::Converged;
            break;
        };
        axpy(alpha, &cg.p, &mut cg.x);
        cg.finish_step(&op, alpha);
        inner += 1;
        m += 1;
        let discrepancy = target.is_some_and(|t| norm2(&cg.r) <= t);
        let restart = discrepancy || inner >= cfg.m_max_in;
        if restart {
            let mut x = std::mem::take(&mut cg.x);
            project_nonneg(&mut x);
            cg = Cgls::start(&op, b, x)?;
        }
        stopped = rec.record(Sample {
            x: &cg.x,
            residual_norm: norm2(&cg.r),
            weighted_residual_norm: None,
            alpha,
            outer_k: k,
            applies: op.total_calls(),
        })?;
        if restart {
            rec.mark_restart();
            k += 1;
            inner = 0;
        }
    }
    Ok(rec.finish(cg.x, termination))
}

/// CGLS with `x ← P₊(x + α p)` and the residual and direction recurrences
/// left as in unconstrained CGLS. The logged residual is the recurrence
/// residual, which drifts from `b - A x` once projections start.
pub fn run_naive_nncg(
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
    let tol = cfg.zero_tol_for(b_norm);
    let mut rec = Recorder::new("naive-nncg", b_norm, None, stop, truth)?;
    let mut x = x0.to_vec();
    project_nonneg(&mut x);
    let mut cg = Cgls::start(&op, b, x)?;
    let mut stopped = rec.record(Sample {
        x: &cg.x,
        residual_norm: norm2(&cg.r),
        weighted_residual_norm: None,
        alpha: 0.0,
        outer_k: 0,
        applies: op.total_calls(),
    })?;
    let mut m = 0;
    let mut termination = Termination::Budget;
    while !stopped && m < cfg.m_max {
        let Some(alpha) = cg.step_length(&op, tol)? else {
            termination = Termination::Converged;
            break;
        };
        axpy(alpha, &cg.p, &mut cg.x);
        project_nonneg(&mut cg.x);
        cg.finish_step(&op, alpha);
        m += 1;
        stopped = rec.record(Sample {
            x: &cg.x,
            residual_norm: norm2(&cg.r),
            weighted_residual_norm: None,
            alpha,
            outer_k: 0,
            applies: op.total_calls(),
        })?;
    }
    Ok(rec.finish(cg.x, termination))
}
