//! Linear operators.
//!
//! Every solver in this crate touches its matrix only through [`LinearMap`]:
//! a forward product `A v` and a transpose product `Aᵀ v`. Explicit matrices
//! (dense, CSR) and matrix-free operators (periodic PSF convolution) are
//! interchangeable behind it. [`LinearOperator`] is the closed set of
//! backends the harness and the Python bindings construct; [`CountingMap`]
//! wraps any map and counts products so per-iteration cost can be audited.

mod conv;
mod dense;
mod diagonal;
mod sparse;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

pub use conv::{gaussian_psf, Conv2dPsf};
pub use dense::DenseMatrix;
pub use diagonal::DiagonalOperator;
pub use sparse::CsrMatrix;

use crate::error::{check_len, Error, Result};

/// A real linear map `A: R^cols -> R^rows` with its transpose.
///
/// The `*_into` methods assume conforming lengths (checked only in debug
/// builds); the provided [`apply`](LinearMap::apply) and
/// [`apply_transpose`](LinearMap::apply_transpose) validate and allocate.
pub trait LinearMap: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// `out = A v`
    fn apply_into(&self, v: &[f64], out: &mut [f64]);

    /// `out = Aᵀ v`
    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]);

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("apply", self.cols(), v.len())?;
        let mut out = vec![0.0; self.rows()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_transpose", self.rows(), v.len())?;
        let mut out = vec![0.0; self.cols()];
        self.apply_transpose_into(v, &mut out);
        Ok(out)
    }
}

/// The concrete operator backends.
#[derive(Debug, Clone)]
pub enum LinearOperator {
    Dense(DenseMatrix),
    /// Compressed sparse rows; tomography projectors are stored this way.
    Sparse(CsrMatrix),
    Conv2d(Conv2dPsf),
    Diagonal(DiagonalOperator),
    /// `v ↦ W (A v)` with diagonal `W`, transpose `r ↦ Aᵀ (W r)`.
    Weighted {
        inner: Arc<LinearOperator>,
        weights: DiagonalOperator,
    },
}

impl LinearOperator {
    pub fn backend_name(&self) -> &'static str {
        match self {
            LinearOperator::Dense(_) => "dense",
            LinearOperator::Sparse(_) => "sparse-csr",
            LinearOperator::Conv2d(_) => "conv2d-psf",
            LinearOperator::Diagonal(_) => "diagonal",
            LinearOperator::Weighted { .. } => "composed",
        }
    }

    pub fn as_conv2d(&self) -> Option<&Conv2dPsf> {
        match self {
            LinearOperator::Conv2d(c) => Some(c),
            _ => None,
        }
    }

    /// True when every explicit entry is known to be nonnegative.
    pub fn is_nonneg(&self) -> bool {
        match self {
            LinearOperator::Dense(d) => d.is_nonneg(),
            LinearOperator::Sparse(s) => s.is_nonneg(),
            LinearOperator::Conv2d(c) => c.psf().iter().all(|&v| v >= 0.0),
            LinearOperator::Diagonal(_) => true,
            LinearOperator::Weighted { inner, .. } => inner.is_nonneg(),
        }
    }
}

impl LinearMap for LinearOperator {
    fn rows(&self) -> usize {
        match self {
            LinearOperator::Dense(d) => d.rows(),
            LinearOperator::Sparse(s) => s.rows(),
            LinearOperator::Conv2d(c) => c.rows(),
            LinearOperator::Diagonal(d) => d.rows(),
            LinearOperator::Weighted { inner, .. } => inner.rows(),
        }
    }

    fn cols(&self) -> usize {
        match self {
            LinearOperator::Dense(d) => d.cols(),
            LinearOperator::Sparse(s) => s.cols(),
            LinearOperator::Conv2d(c) => c.cols(),
            LinearOperator::Diagonal(d) => d.cols(),
            LinearOperator::Weighted { inner, .. } => inner.cols(),
        }
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            LinearOperator::Dense(d) => d.apply_into(v, out),
            LinearOperator::Sparse(s) => s.apply_into(v, out),
            LinearOperator::Conv2d(c) => c.apply_into(v, out),
            LinearOperator::Diagonal(d) => d.apply_into(v, out),
            LinearOperator::Weighted { inner, weights } => {
                inner.apply_into(v, out);
                for (o, w) in out.iter_mut().zip(weights.diag()) {
                    *o *= w;
                }
            }
        }
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            LinearOperator::Dense(d) => d.apply_transpose_into(v, out),
            LinearOperator::Sparse(s) => s.apply_transpose_into(v, out),
            LinearOperator::Conv2d(c) => c.apply_transpose_into(v, out),
            LinearOperator::Diagonal(d) => d.apply_transpose_into(v, out),
            LinearOperator::Weighted { inner, weights } => {
                let scaled: Vec<f64> = v.iter().zip(weights.diag()).map(|(a, w)| a * w).collect();
                inner.apply_transpose_into(&scaled, out);
            }
        }
    }
}

impl From<DenseMatrix> for LinearOperator {
    fn from(m: DenseMatrix) -> Self {
        LinearOperator::Dense(m)
    }
}

impl From<CsrMatrix> for LinearOperator {
    fn from(m: CsrMatrix) -> Self {
        LinearOperator::Sparse(m)
    }
}

impl From<Conv2dPsf> for LinearOperator {
    fn from(c: Conv2dPsf) -> Self {
        LinearOperator::Conv2d(c)
    }
}

impl From<DiagonalOperator> for LinearOperator {
    fn from(d: DiagonalOperator) -> Self {
        LinearOperator::Diagonal(d)
    }
}

/// Builds `W A` without materializing it. Weights must be strictly positive
/// and match the operator's row count.
pub fn compose_weighted(
    op: Arc<LinearOperator>,
    weights: DiagonalOperator,
) -> Result<LinearOperator> {
    check_len("compose_weighted", op.rows(), weights.len())?;
    if let Some((index, &value)) = weights.diag().iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
        return Err(Error::Weight { index, value });
    }
    Ok(LinearOperator::Weighted { inner: op, weights })
}

/// Counts forward and transpose products applied through it.
pub struct CountingMap<'a> {
    inner: &'a dyn LinearMap,
    forward: AtomicUsize,
    transpose: AtomicUsize,
}

impl<'a> CountingMap<'a> {
    pub fn new(inner: &'a dyn LinearMap) -> Self {
        CountingMap {
            inner,
            forward: AtomicUsize::new(0),
            transpose: AtomicUsize::new(0),
        }
    }

    pub fn forward_calls(&self) -> usize {
        self.forward.load(Ordering::Relaxed)
    }

    pub fn transpose_calls(&self) -> usize {
        self.transpose.load(Ordering::Relaxed)
    }

    pub fn total_calls(&self) -> usize {
        self.forward_calls() + self.transpose_calls()
    }
}

impl LinearMap for CountingMap<'_> {
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    fn cols(&self) -> usize {
        self.inner.cols()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_into(v, out)
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        self.transpose.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_transpose_into(v, out)
    }
}
