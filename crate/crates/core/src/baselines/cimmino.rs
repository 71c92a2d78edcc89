//! Projected Cimmino iteration.
//!
//! One sweep is `x ← P₊(x + λ Aᵀ W (b - A x))` with row weights
//! `W = diag(1 / (M ‖a_i‖²))`; zero rows get weight zero. `λ = 2` is the
//! classical method of simultaneous reflections; the default instead takes
//! `λ = 1.9 / σ₁²(W^{1/2} A)`, the largest safe step up to a margin.

use super::gradient::estimate_sigma1;
use crate::error::{check_len, Error, Result};
use crate::fcgls::SolverConfig;
use crate::history::{Recorder, RunHistory, Sample, Termination};
use crate::linop::{CountingMap, LinearMap, LinearOperator};
use crate::stopping::StopPolicy;
use crate::vector::{axpy, is_nonneg, norm2, project_nonneg};

/// Numerator of the default relaxation `factor / σ₁²(W^{1/2} A)`.
pub const CIMMINO_RELAXATION_FACTOR: f64 = 1.9;
/// Bidiagonalization steps for the default relaxation.
pub const CIMMINO_SIGMA_ITERS: usize = 20;

fn cimmino_weights(op: &LinearOperator) -> Vec<f64> {
    let rows = op.rows() as f64;
    row_norms_sq(op)
        .into_iter()
        .map(|n| if n > 0.0 { 1.0 / (rows * n) } else { 0.0 })
        .collect()
}

/// `v ↦ diag(s) A v`.
struct RowScaled<'a> {
    op: &'a LinearOperator,
    scale: Vec<f64>,
}

impl LinearMap for RowScaled<'_> {
    fn rows(&self) -> usize {
        self.op.rows()
    }

    fn cols(&self) -> usize {
        self.op.cols()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        self.op.apply_into(v, out);
        out.iter_mut().zip(&self.scale).for_each(|(o, s)| *o *= s);
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        let sv: Vec<f64> = v.iter().zip(&self.scale).map(|(v, s)| v * s).collect();
        self.op.apply_transpose_into(&sv, out);
    }
}

/// `1.9 / σ₁²(W^{1/2} A)` with `σ₁` from a short bidiagonalization.
pub fn default_cimmino_relaxation(op: &LinearOperator) -> Result<f64> {
    let scaled = RowScaled {
        op,
        scale: cimmino_weights(op).into_iter().map(f64::sqrt).collect(),
    };
    let s = estimate_sigma1(
        &scaled,
        CIMMINO_SIGMA_ITERS.min(op.rows().min(op.cols()).max(1)),
        0,
    )?;
    if !(s > 0.0) {
        return Err(Error::Domain("operator has no nonzero rows".into()));
    }
    Ok(CIMMINO_RELAXATION_FACTOR / (s * s))
}

/// Squared Euclidean norms of the rows of `op`.
pub fn row_norms_sq(op: &LinearOperator) -> Vec<f64> {
    match op {
        LinearOperator::Dense(d) => (0..d.rows())
            .map(|i| d.row(i).iter().map(|v| v * v).sum())
            .collect(),
        LinearOperator::Sparse(s) => s.row_norms_sq(),
        LinearOperator::Conv2d(c) => {
            // Every row of a periodic convolution is a shifted kernel; by
            // Parseval its squared norm is the mean of |H|².
            let h = c.spectrum();
            let e = h.iter().map(|z| z.norm_sqr()).sum::<f64>() / h.len() as f64;
            vec![e; c.rows()]
        }
        LinearOperator::Diagonal(d) => d.diag().iter().map(|v| v * v).collect(),
        LinearOperator::Weighted { inner, weights } => row_norms_sq(inner)
            .into_iter()
            .zip(weights.diag())
            .map(|(n, w)| n * w * w)
            .collect(),
    }
}

pub fn run_cimmino_nn(
    op: &LinearOperator,
    b: &[f64],
    x0: &[f64],
    relaxation: f64,
    cfg: &SolverConfig,
    stop: &StopPolicy,
    truth: Option<&[f64]>,
) -> Result<RunHistory> {
    check_len("initial guess", op.cols(), x0.len())?;
    check_len("data", op.rows(), b.len())?;
    if !is_nonneg(x0) {
        return Err(Error::Precondition(
            "initial guess must be nonnegative".into(),
        ));
    }
    if !(relaxation > 0.0 && relaxation < f64::INFINITY) {
        return Err(Error::Config(format!(
            "relaxation must be positive, got {relaxation}"
        )));
    }
    let weights = cimmino_weights(op);
    let counted = CountingMap::new(op);
    let b_norm = norm2(b);
    let mut rec = Recorder::new("cimmino", b_norm, None, stop, truth)?;
    let mut x = x0.to_vec();
    let mut ax = counted.apply(&x)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut g = vec![0.0; x.len()];
    let mut stopped = rec.record(Sample {
        x: &x,
        residual_norm: norm2(&r),
        weighted_residual_norm: None,
        alpha: relaxation,
        outer_k: 0,
        applies: counted.total_calls(),
    })?;
    let mut m = 0;
    while !stopped && m < cfg.m_max {
        let wr: Vec<f64> = r.iter().zip(&weights).map(|(r, w)| r * w).collect();
        counted.apply_transpose_into(&wr, &mut g);
        axpy(relaxation, &g, &mut x);
        project_nonneg(&mut x);
        counted.apply_into(&x, &mut ax);
        for ((ri, bi), ai) in r.iter_mut().zip(b).zip(&ax) {
            *ri = bi - ai;
        }
        m += 1;
        stopped = rec.record(Sample {
            x: &x,
            residual_norm: norm2(&r),
            weighted_residual_norm: None,
            alpha: relaxation,
            outer_k: 0,
            applies: counted.total_calls(),
        })?;
    }
    Ok(rec.finish(x, Termination::Budget))
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
    fn identity_system() {
        // M = 3, unit rows: x ← x + (2/3)(b - x) converges geometrically.
        let a = LinearOperator::Dense(DenseMatrix::identity(3));
        let b = [1.0, 2.0, 3.0];
        let h = run_cimmino_nn(
            &a,
            &b,
            &[0.0; 3],
            2.0,
            &cfg(60),
            &StopPolicy::never(),
            Some(&b),
        )
        .unwrap();
        assert!(h.min_relative_error().unwrap().0 < 1e-12);
    }

    #[test]
    fn consistent_two_by_two() {
        let a = LinearOperator::Dense(
            DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap(),
        );
        let truth = [1.0, 2.0];
        let b = a.apply(&truth).unwrap();
        let h = run_cimmino_nn(
            &a,
            &b,
            &[0.0; 2],
            2.0,
            &cfg(400),
            &StopPolicy::never(),
            Some(&truth),
        )
        .unwrap();
        assert!(h.min_relative_error().unwrap().0 < 1e-8);
    }

    #[test]
    fn convolution_row_norms_match_kernel() {
        let psf = gaussian_psf(3, 3, 0.8);
        let e: f64 = psf.iter().map(|v| v * v).sum();
        let op = LinearOperator::Conv2d(Conv2dPsf::new(6, 6, 3, 3, psf).unwrap());
        for n in row_norms_sq(&op) {
            assert!((n - e).abs() < 1e-14);
        }
    }

    #[test]
    fn default_relaxation_on_identity() {
        // W^{1/2} A = I / √M, so σ₁² = 1/M.
        let a = LinearOperator::Dense(DenseMatrix::identity(4));
        let lambda = default_cimmino_relaxation(&a).unwrap();
        assert!((lambda - 1.9 * 4.0).abs() < 1e-10, "{lambda}");
    }
}
