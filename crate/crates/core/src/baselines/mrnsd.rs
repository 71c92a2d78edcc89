//! Modified residual norm steepest descent and its weighted and
//! FFT-preconditioned variants.
//!
//! Each iteration descends along `d = X g`, `X = diag(x)`, where `g` is the
//! (possibly weighted) negative gradient of the least squares objective. The
//! exact line minimizer along `d` is cut back so the iterate stays
//! nonnegative, with the same bound as the flexible solver.

use rustfft::num_complex::Complex64;

use crate::covariance::NoiseParams;
use crate::error::{check_len, Error, Result};
use crate::fcgls::SolverConfig;
use crate::history::{Recorder, RunHistory, Sample, Termination};
use crate::linop::{CountingMap, LinearMap, LinearOperator};
use crate::nn::bounded_step_blocking;
use crate::stopping::StopPolicy;
use crate::vector::{axpy, dot, dot_with, is_nonneg, norm2, project_nonneg};

/// Default relative cutoff below which transfer function magnitudes are
/// replaced by one in the preconditioner.
pub const PMRNSD_THRESHOLD: f64 = 0.1;

enum Weighting {
    Unit,
    /// Fixed `C⁻¹`.
    Fixed(Vec<f64>),
    /// `C = A x + shift`, refreshed every iteration.
    Tracking {
        shift: f64,
    },
}

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

fn positive_inverse(c: &[f64]) -> Result<Vec<f64>> {
    c.iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 {
                Ok(1.0 / value)
            } else {
                Err(Error::Covariance { index, value })
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn run_family(
    op: &dyn LinearMap,
    data: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
    weighting: Weighting,
    name: &str,
    on_covariance: &mut dyn FnMut(usize, &[f64]),
) -> Result<RunHistory> {
    check_x0(op, data, x0)?;
    let op = CountingMap::new(op);
    let data_norm = norm2(data);
    let zero_tol = cfg.zero_tol_for(data_norm);
    let mut x = x0.to_vec();
    let ax = op.apply(&x)?;
    let mut r: Vec<f64> = data.iter().zip(&ax).map(|(b, a)| b - a).collect();

    let mut metric: Option<Vec<f64>> = match &weighting {
        Weighting::Unit => None,
        Weighting::Fixed(c_inv) => Some(c_inv.clone()),
        Weighting::Tracking { shift } => {
            let c: Vec<f64> = ax.iter().map(|v| v + shift).collect();
            on_covariance(1, &c);
            Some(positive_inverse(&c)?)
        }
    };
    let weighted = metric.is_some();
    let weighted_data_norm = metric
        .as_deref()
        .map(|c| dot_with(Some(c), data, data).sqrt());
    let mut rec = Recorder::new(name, data_norm, weighted_data_norm, stop, truth)?;
    let weighted_norm = |metric: &Option<Vec<f64>>, r: &[f64]| {
        weighted.then(|| dot_with(metric.as_deref(), r, r).sqrt())
    };

    let mut stopped = rec.record(Sample {
        x: &x,
        residual_norm: norm2(&r),
        weighted_residual_norm: weighted_norm(&metric, &r),
        alpha: 0.0,
        outer_k: 0,
        applies: op.total_calls(),
    })?;
    let mut g = vec![0.0; x.len()];
    let mut w = vec![0.0; r.len()];
    let mut m = 0usize;
    let mut termination = Termination::Budget;
    while !stopped && m < cfg.m_max {
        match &metric {
            Some(c) => {
                let cr: Vec<f64> = r.iter().zip(c).map(|(r, c)| r * c).collect();
                op.apply_transpose_into(&cr, &mut g);
            }
            None => op.apply_transpose_into(&r, &mut g),
        }
        // From an all-zero iterate X = 0 would freeze the method; the first
        // step then uses X = I, as the flexible solver does.
        let d: Vec<f64> = if x.iter().all(|&v| v == 0.0) {
            g.clone()
        } else {
            x.iter().zip(&g).map(|(x, g)| x * g).collect()
        };
        if norm2(&d) <= zero_tol {
            termination = Termination::Converged;
            break;
        }
        op.apply_into(&d, &mut w);
        let ww = dot_with(metric.as_deref(), &w, &w);
        if ww <= zero_tol * zero_tol {
            if m > 0 {
                termination = Termination::Converged;
                break;
            }
            return Err(Error::ZeroDirection {
                iteration: m + 1,
                norm_sq: ww,
            });
        }
        let alpha = dot(&g, &d) / ww;
        let (alpha_bar, blocking) = bounded_step_blocking(alpha, &x, &d);
        if alpha_bar == 0.0 {
            termination = Termination::Breakdown;
            break;
        }
        axpy(alpha_bar, &d, &mut x);
        for i in blocking {
            x[i] = 0.0;
        }
        project_nonneg(&mut x);
        axpy(-alpha_bar, &w, &mut r);
        m += 1;
        if let Weighting::Tracking { shift } = weighting {
            let c: Vec<f64> = data.iter().zip(&r).map(|(b, r)| b - r + shift).collect();
            on_covariance(m + 1, &c);
            metric = Some(positive_inverse(&c)?);
        }
        stopped = rec.record(Sample {
            x: &x,
            residual_norm: norm2(&r),
            weighted_residual_norm: weighted_norm(&metric, &r),
            alpha: alpha_bar,
            outer_k: 0,
            applies: op.total_calls(),
        })?;
    }
    Ok(rec.finish(x, termination))
}

pub fn run_mrnsd(
    op: &dyn LinearMap,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<RunHistory> {
    run_family(
        op,
        b,
        x0,
        cfg,
        stop,
        truth,
        Weighting::Unit,
        "mrnsd",
        &mut |_, _| {},
    )
}

/// Weighted variant with the fixed covariance `diag(b) + σ²`, applied to
/// `b_β = b - β`.
pub fn run_wmrnsd(
    op: &dyn LinearMap,
    b: &[f64],
    noise: NoiseParams,
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<RunHistory> {
    let s2 = noise.sigma * noise.sigma;
    let c: Vec<f64> = b.iter().map(|v| v + s2).collect();
    let c_inv = positive_inverse(&c)?;
    let b_beta: Vec<f64> = b.iter().map(|v| v - noise.beta).collect();
    run_family(
        op,
        &b_beta,
        x0,
        cfg,
        stop,
        truth,
        Weighting::Fixed(c_inv),
        "wmrnsd",
        &mut |_, _| {},
    )
}

/// Weighted variant whose covariance `A x_{m-1} + β + σ²` follows the
/// iterate. `A x` is carried along as `b_β - r`, so no extra products are
/// needed.
pub fn run_kwmrnsd(
    op: &dyn LinearMap,
    b: &[f64],
    noise: NoiseParams,
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<RunHistory> {
    run_kwmrnsd_traced(op, b, noise, x0, cfg, stop, truth, &mut |_, _| {})
}

/// [`run_kwmrnsd`] passing `(m, diag C)` to `trace` before iteration `m`.
#[allow(clippy::too_many_arguments)]
pub fn run_kwmrnsd_traced(
    op: &dyn LinearMap,
    b: &[f64],
    noise: NoiseParams,
    x0: &[f64],
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
    trace: &mut dyn FnMut(usize, &[f64]),
) -> Result<RunHistory> {
    let b_beta: Vec<f64> = b.iter().map(|v| v - noise.beta).collect();
    let shift = noise.beta + noise.sigma * noise.sigma;
    run_family(
        op,
        &b_beta,
        x0,
        cfg,
        stop,
        truth,
        Weighting::Tracking { shift },
        "kwmrnsd",
        trace,
    )
}

/// MRNSD on the FFT-preconditioned system `L⁻¹ A x = L⁻¹ b`. `L` shares the
/// transfer function of `A` except that magnitudes below `threshold` times
/// the largest are replaced by one. Residuals in the history are those of
/// the preconditioned system.
pub fn run_pmrnsd(
    op: &LinearOperator,
    b: &[f64],
    x0: &[f64],
    threshold: f64,
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<RunHistory> {
    let conv = op.as_conv2d().ok_or_else(|| {
        Error::UnsupportedOperator(format!(
            "FFT preconditioning needs a convolution operator, got {}",
            op.backend_name()
        ))
    })?;
    check_x0(conv, b, x0)?;
    let h = conv.spectrum();
    let h_max = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cutoff = threshold * h_max;
    let one = Complex64::new(1.0, 0.0);
    let l: Vec<Complex64> = h
        .iter()
        .map(|&z| {
            if z.norm() >= cutoff && z.norm() > 0.0 {
                z
            } else {
                one
            }
        })
        .collect();
    let preconditioned: Vec<Complex64> = h.iter().zip(&l).map(|(&hz, &lz)| hz / lz).collect();
    let l_inv: Vec<Complex64> = l.iter().map(|&lz| one / lz).collect();
    let a_tilde = conv.with_spectrum(preconditioned)?;
    let b_tilde = conv.apply_spectral(b, &l_inv);
    run_family(
        &a_tilde,
        &b_tilde,
        x0,
        cfg,
        stop,
        truth,
        Weighting::Unit,
        "pmrnsd",
        &mut |_, _| {},
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{gaussian_psf, Conv2dPsf, DenseMatrix};

    fn cfg(m_max: usize) -> SolverConfig {
        SolverConfig {
            m_max,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn identity_reaches_data() {
        let a = DenseMatrix::identity(4);
        let b = [1.0, 2.0, 0.5, 3.0];
        let h = run_mrnsd(&a, &b, &[1.0; 4], &cfg(50), &StopPolicy::never(), Some(&b)).unwrap();
        assert!(h.min_relative_error().unwrap().0 < 1e-8);
    }

    #[test]
    fn negative_data_component_decays() {
        let a = DenseMatrix::identity(2);
        let h = run_mrnsd(
            &a,
            &[1.0, -1.0],
            &[0.5, 0.5],
            &cfg(60),
            &StopPolicy::never(),
            None,
        )
        .unwrap();
        assert!((h.x[0] - 1.0).abs() < 1e-8);
        assert!(h.x[1] >= 0.0 && h.x[1] < 1e-8);
    }

    #[test]
    fn unit_weights_match_plain() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0], vec![0.3, 0.3]]).unwrap();
        let b = [0.0, 0.0, 0.0];
        let data = [1.0, 0.7, 0.4];
        // sigma = 1 and b = 0 give unit covariance; beta = 0.
        let noise = NoiseParams {
            sigma: 1.0,
            beta: 0.0,
        };
        let c = cfg(10);
        let plain = run_mrnsd(&a, &data, &[1.0, 1.0], &c, &StopPolicy::never(), None).unwrap();
        let c_inv = positive_inverse(
            &b.iter()
                .map(|v| v + noise.sigma * noise.sigma)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let w = run_family(
            &a,
            &data,
            &[1.0, 1.0],
            &c,
            &StopPolicy::never(),
            None,
            Weighting::Fixed(c_inv),
            "w",
            &mut |_, _| {},
        )
        .unwrap();
        for (p, q) in plain.x.iter().zip(&w.x) {
            assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
        }
    }

    #[test]
    fn tracking_covariance_follows_iterate() {
        let a = DenseMatrix::identity(2);
        let b = [3.0, 2.0];
        let noise = NoiseParams {
            sigma: 0.0,
            beta: 1.0,
        };
        let mut seen: Vec<(usize, Vec<f64>)> = Vec::new();
        let h = run_kwmrnsd_traced(
            &a,
            &b,
            noise,
            &[1.0, 1.0],
            &cfg(5),
            &StopPolicy::never(),
            None,
            &mut |m, c| seen.push((m, c.to_vec())),
        )
        .unwrap();
        assert_eq!(seen[0].1, vec![2.0, 2.0]);
        // The covariance before iteration m+1 is A x_m + β.
        let h2 = run_kwmrnsd(
            &a,
            &b,
            noise,
            &[1.0, 1.0],
            &cfg(1),
            &StopPolicy::never(),
            None,
        )
        .unwrap();
        let expected: Vec<f64> = h2.x.iter().map(|v| v + 1.0).collect();
        for (s, e) in seen[1].1.iter().zip(&expected) {
            assert!((s - e).abs() < 1e-12);
        }
        assert!(h.records.len() > 1);
    }

    #[test]
    fn pmrnsd_rejects_matrices() {
        let a = LinearOperator::Dense(DenseMatrix::identity(2));
        let err = run_pmrnsd(
            &a,
            &[1.0, 1.0],
            &[1.0, 1.0],
            PMRNSD_THRESHOLD,
            &cfg(3),
            &StopPolicy::never(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnsupportedOperator(_)));
    }

    #[test]
    fn pmrnsd_with_infinite_threshold_is_mrnsd() {
        let conv = Conv2dPsf::new(8, 8, 5, 5, gaussian_psf(5, 5, 1.0)).unwrap();
        let b: Vec<f64> = (0..64).map(|i| 1.0 + (i % 7) as f64).collect();
        let x0 = vec![1.0; 64];
        let plain = run_mrnsd(&conv, &b, &x0, &cfg(10), &StopPolicy::never(), None).unwrap();
        let op = LinearOperator::Conv2d(conv);
        let pre = run_pmrnsd(
            &op,
            &b,
            &x0,
            f64::INFINITY,
            &cfg(10),
            &StopPolicy::never(),
            None,
        )
        .unwrap();
        for (p, q) in plain.x.iter().zip(&pre.x) {
            assert!((p - q).abs() < 1e-10 * p.abs().max(1.0));
        }
    }
}
