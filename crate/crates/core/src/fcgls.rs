//! Flexible CGLS.
//!
//! CGLS for the normal equations with a left preconditioner `L^(m)` that may
//! change at every iteration:
//!
//! ```text
//! r_0 = b - A x_0,  z_0 = Aᵀ r_0,  z̄_0 = L^(0) z_0,  d_0 = z̄_0,  w_0 = A d_0
//! for m = 1, 2, …
//!     α_{m-1} = <r_{m-1}, w_{m-1}> / <w_{m-1}, w_{m-1}>
//!     x_m = x_{m-1} + α_{m-1} d_{m-1}
//!     r_m = r_{m-1} - α_{m-1} w_{m-1}
//!     z_m = Aᵀ r_m,  z̄_m = L^(m) z_m
//!     β_j = -<A z̄_m, w_j> / <w_j, w_j>           j in the window
//!     d_m = z̄_m + Σ β_j d_j,  w_m = A z̄_m + Σ β_j w_j
//! ```
//!
//! Because `L^(m)` varies, the two-term CGLS recurrence no longer holds and
//! every stored direction enters the update of `d_m`. The window keeps the
//! last `m̂` pairs `(d_j, w_j)`; `m̂ ≥ m_max` is the full recurrence, under
//! which the `w_j` are mutually orthogonal and `‖r_m‖` is non-increasing.
//! Each iteration costs one product with `A` and one with `Aᵀ`.
//!
//! The engine optionally works in a diagonal metric `C⁻¹` (all residual-side
//! inner products become `<u, v>_C = Σ u_i v_i / c_i`, and `z = Aᵀ C⁻¹ r`),
//! which is how the covariance-preconditioned variant reuses it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::history::{Recorder, RunHistory, Sample, Termination};
use crate::linop::{CountingMap, DiagonalOperator, LinearMap};
use crate::stopping::{StopPolicy, StopRule, DEFAULT_THETA};
use crate::vector::{axpy, dot_with, norm2, project_nonneg};

/// Scale of the default zero tolerance relative to `‖b‖`.
pub const ZERO_TOL_SCALE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Truncation window `m̂` (number of stored direction pairs).
    pub m_hat: usize,
    /// Total iteration budget.
    pub m_max: usize,
    /// Inner iterations per restart cycle.
    pub m_max_in: usize,
    /// Maximum number of restart cycles; unbounded by default.
    #[serde(skip_serializing_if = "is_unbounded")]
    pub k_max_out: usize,
    /// Residual-stabilization tolerance.
    pub tau: f64,
    /// Discrepancy safety factor.
    pub theta: f64,
    /// Noise level `‖η‖ / ‖b_exact‖`, when known.
    pub noise_level: Option<f64>,
    /// Absolute threshold for zero steps; `None` means `1e-14 ‖b‖`.
    pub zero_tol: Option<f64>,
}

fn is_unbounded(k: &usize) -> bool {
    *k == usize::MAX
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            m_hat: 20,
            m_max: 200,
            m_max_in: 20,
            k_max_out: usize::MAX,
            tau: 1e-4,
            theta: DEFAULT_THETA,
            noise_level: None,
            zero_tol: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_hat < 1 {
            return Err(Error::Config("m_hat must be at least 1".into()));
        }
        if self.m_max_in < 1 {
            return Err(Error::Config("m_max_in must be at least 1".into()));
        }
        if self.k_max_out < 1 {
            return Err(Error::Config("k_max_out must be at least 1".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.theta >= 1.0) {
            return Err(Error::Config(format!(
                "theta must be at least 1, got {}",
                self.theta
            )));
        }
        if let Some(e) = self.noise_level {
            if !(e >= 0.0) {
                return Err(Error::Config(format!(
                    "noise level must be nonnegative, got {e}"
                )));
            }
        }
        Ok(())
    }

    pub fn zero_tol_for(&self, data_norm: f64) -> f64 {
        self.zero_tol.unwrap_or(ZERO_TOL_SCALE * data_norm)
    }

    /// Stabilization with `tau`, and the discrepancy principle if a noise
    /// level is set.
    pub fn stop_rule(&self) -> StopRule {
        StopRule::standard(self.tau, self.theta, self.noise_level)
    }

    /// Untruncated recurrence over the whole budget.
    pub fn untruncated(mut self) -> Self {
        self.m_hat = self.m_max.max(self.m_max_in).max(1);
        self
    }
}

/// Supplies `L^(m)` from the current iterate.
pub trait FlexPreconditioner {
    fn update(&mut self, m: usize, x: &[f64]) -> Result<DiagonalOperator>;
}

impl<F> FlexPreconditioner for F
where
    F: FnMut(usize, &[f64]) -> Result<DiagonalOperator>,
{
    fn update(&mut self, m: usize, x: &[f64]) -> Result<DiagonalOperator> {
        self(m, x)
    }
}

/// `L^(m) = I` for every `m`: plain CGLS.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl FlexPreconditioner for IdentityPreconditioner {
    fn update(&mut self, _m: usize, x: &[f64]) -> Result<DiagonalOperator> {
        Ok(DiagonalOperator::identity(x.len()))
    }
}

/// Iterate, residual, and windowed direction history of a flexible CGLS run.
#[derive(Debug, Clone)]
pub struct FcglsState {
    pub x: Vec<f64>,
    /// `b - A x`, maintained by recurrence.
    pub r: Vec<f64>,
    /// `Aᵀ C⁻¹ r`
    pub z: Vec<f64>,
    /// `L z`
    pub zbar: Vec<f64>,
    /// `A z̄`
    pub a_zbar: Vec<f64>,
    pub d_hist: VecDeque<Vec<f64>>,
    pub w_hist: VecDeque<Vec<f64>>,
    /// Cached `<w_j, w_j>_C`.
    ww_hist: VecDeque<f64>,
    /// Iteration counter within the current Krylov space.
    pub m: usize,
    metric: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub alpha: f64,
    pub breakdown: bool,
}

impl FcglsState {
    /// `r_0 = b - A x_0`, `z_0 = Aᵀ C⁻¹ r_0`, `z̄_0 = L^(0) z_0`, `d_0 = z̄_0`,
    /// `w_0 = A d_0`. `metric` holds the diagonal of `C⁻¹`.
    pub fn init(
        op: &dyn LinearMap,
        b: &[f64],
        l0: &DiagonalOperator,
        x0: &[f64],
        metric: Option<Vec<f64>>,
    ) -> Result<Self> {
        check_len("fcgls_init: b", op.rows(), b.len())?;
        check_len("fcgls_init: x0", op.cols(), x0.len())?;
        check_len("fcgls_init: L0", op.cols(), l0.len())?;
        if let Some(c) = &metric {
            check_len("fcgls_init: metric", op.rows(), c.len())?;
        }
        let mut ax = vec![0.0; op.rows()];
        op.apply_into(x0, &mut ax);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        Self::from_residual(op, x0.to_vec(), r, l0, metric)
    }

    /// Starts a fresh Krylov space at `x` whose residual `r = b - A x` is
    /// already known. Costs one `Aᵀ` and one `A` product.
    pub fn from_residual(
        op: &dyn LinearMap,
        x: Vec<f64>,
        r: Vec<f64>,
        l0: &DiagonalOperator,
        metric: Option<Vec<f64>>,
    ) -> Result<Self> {
        let mut state = FcglsState {
            z: vec![0.0; x.len()],
            zbar: vec![0.0; x.len()],
            a_zbar: vec![0.0; r.len()],
            x,
            r,
            d_hist: VecDeque::new(),
            w_hist: VecDeque::new(),
            ww_hist: VecDeque::new(),
            m: 0,
            metric,
        };
        state.refresh_gradient(op);
        state.restart_with(op, l0);
        Ok(state)
    }

    pub fn metric(&self) -> Option<&[f64]> {
        self.metric.as_deref()
    }

    /// `z = Aᵀ C⁻¹ r` (one `Aᵀ` product).
    fn refresh_gradient(&mut self, op: &dyn LinearMap) {
        match &self.metric {
            None => op.apply_transpose_into(&self.r, &mut self.z),
            Some(c) => {
                let cr: Vec<f64> = self.r.iter().zip(c).map(|(r, c)| r * c).collect();
                op.apply_transpose_into(&cr, &mut self.z);
            }
        }
    }

    /// Drops the direction history and restarts with `d_0 = L z`,
    /// `w_0 = A d_0` (one `A` product).
    pub fn restart_with(&mut self, op: &dyn LinearMap, l: &DiagonalOperator) {
        for ((zb, zi), li) in self.zbar.iter_mut().zip(&self.z).zip(l.diag()) {
            *zb = li * zi;
        }
        op.apply_into(&self.zbar, &mut self.a_zbar);
        self.restart_reusing();
    }

    /// Drops the direction history and restarts from the current `z̄` and
    /// `A z̄`. Valid when the preconditioner for the new cycle equals the one
    /// that produced `z̄`; costs no products.
    pub fn restart_reusing(&mut self) {
        self.d_hist.clear();
        self.w_hist.clear();
        self.ww_hist.clear();
        let ww = dot_with(self.metric.as_deref(), &self.a_zbar, &self.a_zbar);
        self.d_hist.push_back(self.zbar.clone());
        self.w_hist.push_back(self.a_zbar.clone());
        self.ww_hist.push_back(ww);
        self.m = 0;
    }

    /// Changes the metric and restarts at the current iterate. Costs one
    /// `Aᵀ` and one `A` product.
    pub fn restart_with_metric(
        &mut self,
        op: &dyn LinearMap,
        metric: Vec<f64>,
        l: &DiagonalOperator,
    ) {
        self.metric = Some(metric);
        self.refresh_gradient(op);
        self.restart_with(op, l);
    }

    pub fn last_direction(&self) -> &[f64] {
        self.d_hist
            .back()
            .expect("history is never empty after init")
    }

    pub fn last_direction_image(&self) -> &[f64] {
        self.w_hist
            .back()
            .expect("history is never empty after init")
    }

    /// `(α, <w, w>_C)` for the latest direction.
    pub fn alpha(&self) -> (f64, f64) {
        let w = self.last_direction_image();
        let ww = *self.ww_hist.back().unwrap();
        let rw = dot_with(self.metric.as_deref(), &self.r, w);
        (if ww > 0.0 { rw / ww } else { 0.0 }, ww)
    }

    pub fn residual_norm(&self) -> f64 {
        norm2(&self.r)
    }

    /// `‖C^{-1/2} r‖`, or `‖r‖` without a metric.
    pub fn weighted_residual_norm(&self) -> f64 {
        dot_with(self.metric.as_deref(), &self.r, &self.r).sqrt()
    }

    /// Takes the step `x += step d`, refreshes `L^(m)` and extends the
    /// direction window. With `clamp = Some(idx)` the listed components of
    /// `x` are set to exactly zero and any round-off negatives are projected
    /// away.
    pub fn advance(
        &mut self,
        op: &dyn LinearMap,
        step: f64,
        clamp: Option<&[usize]>,
        precond: &mut dyn FlexPreconditioner,
        m_hat: usize,
    ) -> Result<()> {
        let d = self.d_hist.back().unwrap();
        let w = self.w_hist.back().unwrap();
        axpy(step, d, &mut self.x);
        if let Some(idx) = clamp {
            for &i in idx {
                self.x[i] = 0.0;
            }
            project_nonneg(&mut self.x);
        }
        axpy(-step, w, &mut self.r);
        self.m += 1;

        let l = precond.update(self.m, &self.x)?;
        check_len("preconditioner", self.x.len(), l.len())?;
        self.refresh_gradient(op);
        for ((zb, zi), li) in self.zbar.iter_mut().zip(&self.z).zip(l.diag()) {
            *zb = li * zi;
        }
        op.apply_into(&self.zbar, &mut self.a_zbar);

        let metric = self.metric.as_deref();
        let mut d_new = self.zbar.clone();
        let mut w_new = self.a_zbar.clone();
        for ((dj, wj), &wwj) in self.d_hist.iter().zip(&self.w_hist).zip(&self.ww_hist) {
            if wwj <= 0.0 {
                continue;
            }
            let beta = -dot_with(metric, &self.a_zbar, wj) / wwj;
            axpy(beta, dj, &mut d_new);
            axpy(beta, wj, &mut w_new);
        }
        let ww_new = dot_with(metric, &w_new, &w_new);
        self.d_hist.push_back(d_new);
        self.w_hist.push_back(w_new);
        self.ww_hist.push_back(ww_new);
        while self.d_hist.len() > m_hat {
            self.d_hist.pop_front();
            self.w_hist.pop_front();
            self.ww_hist.pop_front();
        }
        Ok(())
    }
}

/// Initializes a flexible CGLS state.
pub fn fcgls_init(
    op: &dyn LinearMap,
    b: &[f64],
    l0: &DiagonalOperator,
    x0: &[f64],
) -> Result<FcglsState> {
    FcglsState::init(op, b, l0, x0, None)
}

/// One flexible CGLS iteration.
///
/// Returns `breakdown = true` without touching the state when
/// `|α| ≤ zero_tol`; fails with [`Error::ZeroDirection`] when
/// `<w, w> ≤ zero_tol²`.
pub fn fcgls_step(
    state: &mut FcglsState,
    op: &dyn LinearMap,
    precond: &mut dyn FlexPreconditioner,
    m_hat: usize,
    zero_tol: f64,
) -> Result<StepOutcome> {
    let (alpha, ww) = state.alpha();
    if ww <= zero_tol * zero_tol {
        return Err(Error::ZeroDirection {
            iteration: state.m + 1,
            norm_sq: ww,
        });
    }
    if alpha.abs() <= zero_tol {
        return Ok(StepOutcome {
            alpha,
            breakdown: true,
        });
    }
    state.advance(op, alpha, None, precond, m_hat)?;
    Ok(StepOutcome {
        alpha,
        breakdown: false,
    })
}

/// Runs flexible CGLS until breakdown, the stop rule, or `cfg.m_max`
/// iterations. `L^(0)` is `precond.update(0, x0)`.
pub fn run_fcgls(
    op: &dyn LinearMap,
    b: &[f64],
    precond: &mut dyn FlexPreconditioner,
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<RunHistory> {
    run_fcgls_named(op, b, precond, x0, cfg, stop, truth, "fcgls")
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_fcgls_named(
    op: &dyn LinearMap,
    b: &[f64],
    precond: &mut dyn FlexPreconditioner,
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
    name: &str,
) -> Result<RunHistory> {
    cfg.validate()?;
    let op = CountingMap::new(op);
    let b_norm = norm2(b);
    let zero_tol = cfg.zero_tol_for(b_norm);
    let l0 = precond.update(0, x0)?;
    let mut state = FcglsState::init(&op, b, &l0, x0, None)?;
    let mut rec = Recorder::new(name, b_norm, None, stop, truth)?;

    let mut stopped = rec.record(Sample {
        x: &state.x,
        residual_norm: state.residual_norm(),
        weighted_residual_norm: None,
        alpha: 0.0,
        outer_k: 0,
        applies: op.total_calls(),
    })?;
    let mut termination = Termination::Budget;
    while !stopped && state.m < cfg.m_max {
        if norm2(state.last_direction()) <= zero_tol {
            termination = Termination::Converged;
            break;
        }
        let outcome = match fcgls_step(&mut state, &op, precond, cfg.m_hat, zero_tol) {
            Ok(o) => o,
            // After progress, a vanishing direction image means the Krylov
            // space is exhausted to working precision.
            Err(Error::ZeroDirection { .. }) if state.m > 0 => {
                termination = Termination::Converged;
                break;
            }
            Err(e) => return Err(e),
        };
        if outcome.breakdown {
            termination = Termination::Breakdown;
            break;
        }
        stopped = rec.record(Sample {
            x: &state.x,
            residual_norm: state.residual_norm(),
            weighted_residual_norm: None,
            alpha: outcome.alpha,
            outer_k: 0,
            applies: op.total_calls(),
        })?;
    }
    Ok(rec.finish(state.x, termination))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::DenseMatrix;

    fn dense(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn init_identity() {
        let a = DenseMatrix::identity(2);
        let s = fcgls_init(&a, &[1.0, 2.0], &DiagonalOperator::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(s.r, vec![1.0, 2.0]);
        assert_eq!(s.z, vec![1.0, 2.0]);
        assert_eq!(s.last_direction(), &[1.0, 2.0]);
        assert_eq!(s.last_direction_image(), &[1.0, 2.0]);
    }

    #[test]
    fn init_at_exact_solution_has_zero_direction() {
        let a = dense(&[vec![2.0, 1.0], vec![0.0, 1.0]]);
        let s = fcgls_init(&a, &[3.0, 1.0], &DiagonalOperator::identity(2), &[1.0, 1.0]).unwrap();
        assert_eq!(s.r, vec![0.0, 0.0]);
        assert_eq!(s.last_direction(), &[0.0, 0.0]);
    }

    #[test]
    fn init_with_preconditioner_hand_values() {
        let a = dense(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
        let l0 = DiagonalOperator::new(vec![2.0, 3.0]).unwrap();
        let s = fcgls_init(&a, &[1.0, 2.0], &l0, &[0.0, 0.0]).unwrap();
        assert_eq!(s.z, vec![3.0, 2.0]);
        assert_eq!(s.last_direction(), &[6.0, 6.0]);
        assert_eq!(s.last_direction_image(), &[6.0, 12.0]);
    }

    #[test]
    fn init_dimension_errors() {
        let a = DenseMatrix::identity(2);
        let l = DiagonalOperator::identity(2);
        assert!(matches!(
            fcgls_init(&a, &[1.0], &l, &[0.0, 0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            fcgls_init(&a, &[1.0, 1.0], &l, &[0.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn identity_system_converges_in_one_step() {
        let a = DenseMatrix::identity(3);
        let b = [1.0, -2.0, 0.5];
        let mut s = fcgls_init(&a, &b, &DiagonalOperator::identity(3), &[0.0; 3]).unwrap();
        let out = fcgls_step(&mut s, &a, &mut IdentityPreconditioner, 10, 1e-14).unwrap();
        assert!(!out.breakdown);
        assert_eq!(s.x, b.to_vec());
        assert!(s.residual_norm() == 0.0);
    }

    #[test]
    fn diagonal_system_two_steps() {
        let a = dense(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        let b = [2.0, 1.0];
        let mut s = fcgls_init(&a, &b, &DiagonalOperator::identity(2), &[0.0; 2]).unwrap();
        for _ in 0..2 {
            fcgls_step(&mut s, &a, &mut IdentityPreconditioner, 2, 1e-14).unwrap();
        }
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_direction_is_reported() {
        let a = DenseMatrix::identity(2);
        let mut s = fcgls_init(&a, &[0.0, 0.0], &DiagonalOperator::identity(2), &[0.0; 2]).unwrap();
        let err = fcgls_step(&mut s, &a, &mut IdentityPreconditioner, 2, 1e-14).unwrap_err();
        assert!(matches!(err, Error::ZeroDirection { .. }));
    }

    #[test]
    fn empty_budget_records_only_initial_state() {
        let a = DenseMatrix::identity(2);
        let cfg = SolverConfig {
            m_max: 0,
            ..SolverConfig::default()
        };
        let h = run_fcgls(
            &a,
            &[1.0, 1.0],
            &mut IdentityPreconditioner,
            &[0.0; 2],
            &cfg,
            &StopPolicy::never(),
            None,
        )
        .unwrap();
        assert_eq!(h.records.len(), 1);
        assert_eq!(h.records[0].m, 0);
    }

    #[test]
    fn truncation_window_is_bounded() {
        let a = dense(&[
            vec![4.0, 1.0, 0.0, 0.5],
            vec![1.0, 3.0, 0.2, 0.0],
            vec![0.0, 0.2, 5.0, 1.0],
            vec![0.5, 0.0, 1.0, 2.0],
        ]);
        let b = [1.0, 2.0, 3.0, 4.0];
        let mut s = fcgls_init(&a, &b, &DiagonalOperator::identity(4), &[0.0; 4]).unwrap();
        let mut pre =
            |_m: usize, x: &[f64]| DiagonalOperator::new(x.iter().map(|v| v.abs() + 1.0).collect());
        for _ in 0..3 {
            fcgls_step(&mut s, &a, &mut pre, 2, 1e-14).unwrap();
            assert!(s.d_hist.len() <= 2 && s.d_hist.len() == s.w_hist.len());
        }
    }
}
