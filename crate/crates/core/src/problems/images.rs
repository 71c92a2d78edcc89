//! Deblurring test problems: a 1-D signal, a field of point sources, and an
//! extended satellite-like object, each blurred by a periodic Gaussian PSF.

use rand::Rng;

use super::ProblemInstance;
use crate::error::{Error, Result};
use crate::linop::{gaussian_psf, Conv2dPsf, LinearOperator};
use crate::noise::{rng_for, NoiseSpec, PROBLEM_STREAM};

/// Odd PSF support covering about four standard deviations each way,
/// capped by the image size.
fn psf_extent(sigma: f64, image: usize) -> usize {
    let half = (4.0 * sigma).ceil().max(0.0) as usize;
    let len = 2 * half + 1;
    if len <= image {
        len
    } else if image % 2 == 1 {
        image
    } else {
        image - 1
    }
}

fn gaussian_blur(rows: usize, cols: usize, sigma: f64) -> Result<Conv2dPsf> {
    let pr = if rows == 1 {
        1
    } else {
        psf_extent(sigma, rows)
    };
    let pc = psf_extent(sigma, cols);
    Conv2dPsf::new(rows, cols, pr, pc, gaussian_psf(pr, pc, sigma))
}

/// Piecewise constant signal with two plateaus and three spikes on `[0, n)`.
pub fn boxcar_spikes(n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let at = |f: f64| ((f * n as f64) as usize).min(n.saturating_sub(1));
    for v in &mut x[at(0.10)..at(0.35)] {
        *v = 1.0;
    }
    for v in &mut x[at(0.45)..at(0.55)] {
        *v = 0.5;
    }
    x[at(0.65)] = 2.0;
    x[at(0.75)] = 1.5;
    x[at(0.88)] = 1.0;
    x
}

/// 1-D periodic Gaussian deblurring of [`boxcar_spikes`].
pub fn make_deblur_1d(n: usize, blur_sigma: f64, noise: &NoiseSpec) -> Result<ProblemInstance> {
    if n < 8 {
        return Err(Error::Config(format!(
            "1-D deblurring needs at least 8 samples, got {n}"
        )));
    }
    let op = gaussian_blur(1, n, blur_sigma)?;
    ProblemInstance::from_truth(
        "deblur1d",
        LinearOperator::Conv2d(op),
        (1, n),
        boxcar_spikes(n),
        noise,
    )
}

/// A point source at `(row, col)` with the given intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Star {
    pub row: usize,
    pub col: usize,
    pub intensity: f64,
}

/// Random point sources with intensities in `[10, 100]`.
pub fn random_stars(n: usize, n_stars: usize, seed: u64) -> Vec<Star> {
    let mut rng = rng_for(seed, PROBLEM_STREAM);
    let mut taken = vec![false; n * n];
    let mut stars = Vec::with_capacity(n_stars);
    while stars.len() < n_stars.min(n * n) {
        let (row, col) = (rng.random_range(0..n), rng.random_range(0..n));
        if std::mem::replace(&mut taken[row * n + col], true) {
            continue;
        }
        let u: f64 = rng.random();
        stars.push(Star {
            row,
            col,
            intensity: 100.0 * (0.1 + 0.9 * u * u),
        });
    }
    stars
}

/// `n × n` field of the given stars over a constant sky `background`,
/// blurred by a Gaussian PSF.
pub fn make_starfield_from(
    n: usize,
    stars: &[Star],
    background: f64,
    psf_sigma: f64,
    noise: &NoiseSpec,
) -> Result<ProblemInstance> {
    if n == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    if !(background >= 0.0) {
        return Err(Error::Config(format!(
            "sky background must be nonnegative, got {background}"
        )));
    }
    let mut x = vec![background; n * n];
    for s in stars {
        if s.row >= n || s.col >= n || !(s.intensity >= 0.0) {
            return Err(Error::Config(format!(
                "star {s:?} outside a {n}x{n} image or negative"
            )));
        }
        x[s.row * n + s.col] += s.intensity;
    }
    let op = gaussian_blur(n, n, psf_sigma)?;
    ProblemInstance::from_truth("starfield", LinearOperator::Conv2d(op), (n, n), x, noise)
}

pub fn make_starfield(
    n: usize,
    n_stars: usize,
    background: f64,
    psf_sigma: f64,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<ProblemInstance> {
    if n_stars == 0 {
        return Err(Error::Config("star field needs at least one star".into()));
    }
    make_starfield_from(
        n,
        &random_stars(n, n_stars, seed),
        background,
        psf_sigma,
        noise,
    )
}

/// Satellite-like extended object on `[-1, 1]²` with peak intensity 1: a
/// rotated elliptical body, two striped solar panels, a dish and an antenna.
pub fn satellite_image(n: usize) -> Vec<f64> {
    let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    let mut x = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let px = (2.0 * j as f64 + 1.0) / n as f64 - 1.0;
            let py = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            // body frame
            let u = c * px + s * py;
            let v = -s * px + c * py;
            let mut val: f64 = 0.0;
            if (u / 0.26).powi(2) + (v / 0.16).powi(2) <= 1.0 {
                val = 1.0;
                if (u / 0.12).powi(2) + (v / 0.07).powi(2) <= 1.0 {
                    val = 0.75;
                }
            }
            let au = u.abs();
            if (0.3..=0.86).contains(&au) && v.abs() <= 0.11 {
                let stripe = ((au - 0.3) / 0.08).floor() as i64 % 2 == 0;
                val = val.max(if stripe { 0.6 } else { 0.45 });
            }
            if (0.26..0.3).contains(&au) && v.abs() <= 0.02 {
                val = val.max(0.5);
            }
            let (du, dv) = (u + 0.02, v - 0.28);
            if (du / 0.1).powi(2) + (dv / 0.06).powi(2) <= 1.0 {
                val = val.max(0.85);
            }
            if u.abs() <= 0.015 && (-0.5..=-0.16).contains(&v) {
                val = val.max(0.7);
            }
            x[i * n + j] = val;
        }
    }
    x
}

/// `n × n` satellite-like object of peak intensity `scale` blurred by a
/// Gaussian PSF.
pub fn make_satellite_like(
    n: usize,
    psf_sigma: f64,
    scale: f64,
    noise: &NoiseSpec,
) -> Result<ProblemInstance> {
    if n < 8 {
        return Err(Error::Config(format!(
            "satellite image needs n >= 8, got {n}"
        )));
    }
    if !(scale > 0.0) {
        return Err(Error::Config(format!(
            "intensity scale must be positive, got {scale}"
        )));
    }
    let x: Vec<f64> = satellite_image(n).into_iter().map(|v| v * scale).collect();
    let op = gaussian_blur(n, n, psf_sigma)?;
    ProblemInstance::from_truth("satellite", LinearOperator::Conv2d(op), (n, n), x, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::LinearMap;

    #[test]
    fn deblur_1d_rows_sum_to_one() {
        let p = make_deblur_1d(128, 3.0, &NoiseSpec::default()).unwrap();
        let ones = p.op.apply(&vec![1.0; 128]).unwrap();
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let e: Vec<f64> = (0..128).map(|i| (i * 7 % 13) as f64).collect();
        let fwd = p.op.apply(&e).unwrap();
        let adj = p.op.apply_transpose(&e).unwrap();
        for (a, b) in fwd.iter().zip(&adj) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_blur_is_identity() {
        let p = make_deblur_1d(64, 0.0, &NoiseSpec::default()).unwrap();
        for (b, x) in p.b_exact.iter().zip(&p.x_exact) {
            assert!((b - x).abs() < 1e-12);
        }
    }

    #[test]
    fn single_star_with_delta_psf() {
        let star = Star {
            row: 8,
            col: 8,
            intensity: 5.0,
        };
        let p = make_starfield_from(16, &[star], 0.0, 0.0, &NoiseSpec::default()).unwrap();
        let nonzero = p.b_exact.iter().filter(|v| v.abs() > 1e-12).count();
        assert_eq!(nonzero, 1);
        assert!((p.b_exact[8 * 16 + 8] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn starfield_preserves_flux_and_is_seeded() {
        let p = make_starfield(32, 20, 0.0, 1.5, &NoiseSpec::default(), 4).unwrap();
        let q = make_starfield(32, 20, 0.0, 1.5, &NoiseSpec::default(), 4).unwrap();
        assert_eq!(p.x_exact, q.x_exact);
        let fx: f64 = p.x_exact.iter().sum();
        let fb: f64 = p.b_exact.iter().sum();
        assert!((fx - fb).abs() < 1e-10 * fx);
        assert_eq!(p.x_exact.iter().filter(|&&v| v > 0.0).count(), 20);
    }

    #[test]
    fn satellite_is_nonnegative_and_flux_preserving() {
        let p = make_satellite_like(32, 1.0, 100.0, &NoiseSpec::default()).unwrap();
        assert!(p.x_exact.iter().all(|&v| v >= 0.0));
        assert!(p.x_exact.iter().any(|&v| v > 0.0));
        let fx: f64 = p.x_exact.iter().sum();
        let fb: f64 = p.b_exact.iter().sum();
        assert!((fx - fb).abs() < 1e-10 * fx);
        let d = make_satellite_like(32, 0.0, 100.0, &NoiseSpec::default()).unwrap();
        for (b, x) in d.b_exact.iter().zip(&d.x_exact) {
            assert!((b - x).abs() < 1e-10);
        }
    }
}
