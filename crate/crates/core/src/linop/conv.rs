use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::LinearMap;
use crate::error::{Error, Result};

const PSF_SUM_TOL: f64 = 1e-9;

/// Periodic (circular) 2-D convolution with a centered point spread function.
///
/// The PSF is zero-padded to image size and shifted so its center sits at
/// pixel `(0, 0)`; its transform is computed once at construction. Images
/// are row-major `image_rows × image_cols`. A 1-D signal is the
/// `image_rows = 1` case.
#[derive(Clone)]
pub struct Conv2dPsf {
    image_rows: usize,
    image_cols: usize,
    psf_rows: usize,
    psf_cols: usize,
    psf: Vec<f64>,
    spectrum: Arc<[Complex64]>,
    plans: Arc<Plans>,
}

struct Plans {
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Conv2dPsf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Conv2dPsf")
            .field("image_rows", &self.image_rows)
            .field("image_cols", &self.image_cols)
            .field("psf_rows", &self.psf_rows)
            .field("psf_cols", &self.psf_cols)
            .finish_non_exhaustive()
    }
}

impl Conv2dPsf {
    /// `psf` is row-major `psf_rows × psf_cols`, nonnegative, summing to one,
    /// and no larger than the image. Its center is `(psf_rows / 2, psf_cols / 2)`.
    pub fn new(
        image_rows: usize,
        image_cols: usize,
        psf_rows: usize,
        psf_cols: usize,
        psf: Vec<f64>,
    ) -> Result<Self> {
        if image_rows == 0 || image_cols == 0 || psf_rows == 0 || psf_cols == 0 {
            return Err(Error::Precondition(
                "image and PSF dimensions must be positive".into(),
            ));
        }
        if psf.len() != psf_rows * psf_cols {
            return Err(Error::Dimension {
                context: "Conv2dPsf::new",
                expected: psf_rows * psf_cols,
                found: psf.len(),
            });
        }
        if psf_rows > image_rows || psf_cols > image_cols {
            return Err(Error::Precondition(format!(
                "PSF {psf_rows}x{psf_cols} larger than image {image_rows}x{image_cols}"
            )));
        }
        if let Some(v) = psf.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvariantViolation(format!(
                "PSF entry {v} is negative"
            )));
        }
        let total: f64 = psf.iter().sum();
        if (total - 1.0).abs() > PSF_SUM_TOL {
            return Err(Error::InvariantViolation(format!(
                "PSF sums to {total}, expected 1"
            )));
        }

        let mut planner = FftPlanner::new();
        let plans = Arc::new(Plans {
            row_fwd: planner.plan_fft_forward(image_cols),
            row_inv: planner.plan_fft_inverse(image_cols),
            col_fwd: planner.plan_fft_forward(image_rows),
            col_inv: planner.plan_fft_inverse(image_rows),
        });

        let (cr, cc) = (psf_rows / 2, psf_cols / 2);
        let mut padded = vec![Complex64::new(0.0, 0.0); image_rows * image_cols];
        for p in 0..psf_rows {
            for q in 0..psf_cols {
                let i = (p + image_rows - cr) % image_rows;
                let j = (q + image_cols - cc) % image_cols;
                padded[i * image_cols + j].re += psf[p * psf_cols + q];
            }
        }
        fft2(&plans, image_rows, image_cols, &mut padded, true);

        Ok(Conv2dPsf {
            image_rows,
            image_cols,
            psf_rows,
            psf_cols,
            psf,
            spectrum: padded.into(),
            plans,
        })
    }

    /// A convolution operator on the same grid with a different transfer
    /// function. The spectrum must be conjugate-symmetric for the operator
    /// to map real images to real images.
    pub fn with_spectrum(&self, spectrum: Vec<Complex64>) -> Result<Self> {
        if spectrum.len() != self.spectrum.len() {
            return Err(Error::Dimension {
                context: "Conv2dPsf::with_spectrum",
                expected: self.spectrum.len(),
                found: spectrum.len(),
            });
        }
        Ok(Conv2dPsf {
            psf_rows: 0,
            psf_cols: 0,
            psf: Vec::new(),
            spectrum: spectrum.into(),
            ..self.clone()
        })
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.image_rows, self.image_cols)
    }

    pub fn psf_shape(&self) -> (usize, usize) {
        (self.psf_rows, self.psf_cols)
    }

    /// The PSF as given at construction; empty for operators built by
    /// [`with_spectrum`](Self::with_spectrum).
    pub fn psf(&self) -> &[f64] {
        &self.psf
    }

    /// Transfer function (2-D DFT of the centered, padded PSF), row-major.
    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// Multiplies the transform of `v` by `filter` and transforms back,
    /// keeping the real part.
    pub fn apply_spectral(&self, v: &[f64], filter: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.filter_into(v, &mut out, |k, z| z * filter[k]);
        out
    }

    fn filter_into(&self, v: &[f64], out: &mut [f64], f: impl Fn(usize, Complex64) -> Complex64) {
        debug_assert_eq!(v.len(), self.image_rows * self.image_cols);
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft2(
            &self.plans,
            self.image_rows,
            self.image_cols,
            &mut buf,
            true,
        );
        for (k, z) in buf.iter_mut().enumerate() {
            *z = f(k, *z);
        }
        fft2(
            &self.plans,
            self.image_rows,
            self.image_cols,
            &mut buf,
            false,
        );
        let scale = 1.0 / (self.image_rows * self.image_cols) as f64;
        for (o, z) in out.iter_mut().zip(&buf) {
            *o = z.re * scale;
        }
    }
}

impl LinearMap for Conv2dPsf {
    fn rows(&self) -> usize {
        self.image_rows * self.image_cols
    }

    fn cols(&self) -> usize {
        self.image_rows * self.image_cols
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let h = &self.spectrum;
        self.filter_into(v, out, |k, z| z * h[k]);
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        let h = &self.spectrum;
        self.filter_into(v, out, |k, z| z * h[k].conj());
    }
}

fn fft2(plans: &Plans, rows: usize, cols: usize, buf: &mut [Complex64], forward: bool) {
    let (row_plan, col_plan) = if forward {
        (&plans.row_fwd, &plans.col_fwd)
    } else {
        (&plans.row_inv, &plans.col_inv)
    };
    // rustfft processes every consecutive chunk of the plan length.
    if cols > 1 {
        row_plan.process(buf);
    }
    if rows > 1 {
        let mut t = vec![Complex64::new(0.0, 0.0); rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = buf[i * cols + j];
            }
        }
        col_plan.process(&mut t);
        for i in 0..rows {
            for j in 0..cols {
                buf[i * cols + j] = t[j * rows + i];
            }
        }
    }
}

/// Normalized Gaussian PSF sampled on a `rows × cols` grid centered at
/// `(rows / 2, cols / 2)`. `sigma = 0` gives the delta kernel.
pub fn gaussian_psf(rows: usize, cols: usize, sigma: f64) -> Vec<f64> {
    let (cr, cc) = ((rows / 2) as f64, (cols / 2) as f64);
    let mut psf = vec![0.0; rows * cols];
    if sigma <= 0.0 {
        psf[(rows / 2) * cols + cols / 2] = 1.0;
        return psf;
    }
    let denom = 2.0 * sigma * sigma;
    for i in 0..rows {
        for j in 0..cols {
            let (di, dj) = (i as f64 - cr, j as f64 - cc);
            psf[i * cols + j] = (-(di * di + dj * dj) / denom).exp();
        }
    }
    let total: f64 = psf.iter().sum();
    psf.iter_mut().for_each(|v| *v /= total);
    psf
}
