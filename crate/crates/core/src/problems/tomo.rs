//! Parallel-beam tomography with exact ray/pixel intersection lengths.
//!
//! The image covers `[-n/2, n/2]²` with unit pixels, row-major, row 0 at the
//! top. The ray at angle `θ` and offset `t` is the line
//! `t (-sin θ, cos θ) + s (cos θ, sin θ)`, so `θ = 0` is horizontal. Matrix
//! row `a·p + k` holds the lengths of ray `k` of angle `a` inside each pixel.

use super::ProblemInstance;
use crate::error::{Error, Result};
use crate::linop::{CsrMatrix, LinearOperator};
use crate::noise::NoiseSpec;

/// Default ray count per angle, `round(√2 n)`, enough to cover the image
/// diagonal at unit spacing.
pub fn default_rays(n: usize) -> usize {
    (std::f64::consts::SQRT_2 * n as f64).round() as usize
}

/// Evenly spaced offsets `(k - (p-1)/2) · spacing`.
pub fn ray_offsets(rays: usize, spacing: f64) -> Vec<f64> {
    let mid = (rays as f64 - 1.0) / 2.0;
    (0..rays).map(|k| (k as f64 - mid) * spacing).collect()
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}

/// Intersection lengths `(pixel, length)` of one ray with an `n × n` grid.
pub fn trace_ray(n: usize, theta_deg: f64, offset: f64) -> Vec<(usize, f64)> {
    let th = theta_deg.to_radians();
    let (c, s) = (snap(th.cos()), snap(th.sin()));
    let (px, py) = (-offset * s, offset * c);
    let half = n as f64 / 2.0;

    // Parameter interval where the line is inside the square.
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (p, d) in [(px, c), (py, s)] {
        if d == 0.0 {
            if p < -half || p > half {
                return Vec::new();
            }
        } else {
            let a = (-half - p) / d;
            let b = (half - p) / d;
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    if !(hi > lo) {
        return Vec::new();
    }

    let mut cuts = vec![lo, hi];
    for (p, d) in [(px, c), (py, s)] {
        if d != 0.0 {
            for g in 0..=n {
                let t = (g as f64 - half - p) / d;
                if t > lo && t < hi {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);

    let mut out: Vec<(usize, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 1e-12 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let (x, y) = (px + mid * c, py + mid * s);
        let col = ((x + half).floor() as isize).clamp(0, n as isize - 1) as usize;
        let row = ((half - y).floor() as isize).clamp(0, n as isize - 1) as usize;
        let pix = row * n + col;
        match out.last_mut() {
            Some((last, l)) if *last == pix => *l += len,
            _ => out.push((pix, len)),
        }
    }
    out
}

/// Projection matrix for the given angles (degrees) and ray offsets.
pub fn paralleltomo_matrix(n: usize, angles: &[f64], offsets: &[f64]) -> Result<CsrMatrix> {
    if n == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    if angles.is_empty() {
        return Err(Error::Config("tomography needs at least one angle".into()));
    }
    if offsets.is_empty() {
        return Err(Error::Config(
            "tomography needs at least one ray per angle".into(),
        ));
    }
    let mut triplets = Vec::new();
    for (a, &theta) in angles.iter().enumerate() {
        for (k, &t) in offsets.iter().enumerate() {
            let row = a * offsets.len() + k;
            triplets.extend(
                trace_ray(n, theta, t)
                    .into_iter()
                    .map(|(pix, len)| (row, pix, len)),
            );
        }
    }
    CsrMatrix::from_triplets(angles.len() * offsets.len(), n * n, &triplets)
}

/// The ten-ellipse Shepp-Logan head phantom on `[-1, 1]²`, with the
/// intensities that keep it in `[0, 1]`; overlaps that would go negative are
/// clamped to zero.
pub fn shepp_logan(n: usize) -> Vec<f64> {
    // intensity, semi-axis a, semi-axis b, center x, center y, angle (deg)
    const ELLIPSES: [[f64; 6]; 10] = [
        [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
        [-0.98, 0.6624, 0.874, 0.0, -0.0184, 0.0],
        [-0.02, 0.11, 0.31, 0.22, 0.0, -18.0],
        [-0.02, 0.16, 0.41, -0.22, 0.0, 18.0],
        [0.01, 0.21, 0.25, 0.0, 0.35, 0.0],
        [0.01, 0.046, 0.046, 0.0, 0.1, 0.0],
        [0.01, 0.046, 0.046, 0.0, -0.1, 0.0],
        [0.01, 0.046, 0.023, -0.08, -0.605, 0.0],
        [0.01, 0.023, 0.023, 0.0, -0.606, 0.0],
        [0.01, 0.023, 0.046, 0.06, -0.605, 0.0],
    ];
    let mut img = vec![0.0; n * n];
    let h = (n as f64 - 1.0) / 2.0;
    let scale = if n > 1 { h } else { 1.0 };
    for i in 0..n {
        for j in 0..n {
            let x = (j as f64 - h) / scale;
            let y = (h - i as f64) / scale;
            let mut v = 0.0;
            for [rho, a, b, x0, y0, phi] in ELLIPSES {
                let (c, s) = (phi.to_radians().cos(), phi.to_radians().sin());
                let (dx, dy) = (x - x0, y - y0);
                let u = dx * c + dy * s;
                let w = -dx * s + dy * c;
                if (u / a).powi(2) + (w / b).powi(2) <= 1.0 {
                    v += rho;
                }
            }
            img[i * n + j] = v.clamp(0.0, 1.0);
        }
    }
    img
}

/// Degrees `start, start + step, …` not exceeding `stop`.
pub fn angle_range(start: f64, step: f64, stop: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| start + k as f64 * step).collect()
}

/// Shepp-Logan phantom observed by parallel rays at unit spacing.
pub fn make_paralleltomo(
    n: usize,
    angles: &[f64],
    rays_per_angle: usize,
    noise: &NoiseSpec,
) -> Result<ProblemInstance> {
    let a = paralleltomo_matrix(n, angles, &ray_offsets(rays_per_angle, 1.0))?;
    ProblemInstance::from_truth(
        "paralleltomo",
        LinearOperator::Sparse(a),
        (n, n),
        shepp_logan(n),
        noise,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::LinearMap;

    #[test]
    fn single_pixel_horizontal_ray() {
        assert_eq!(trace_ray(1, 0.0, 0.0), vec![(0, 1.0)]);
    }

    #[test]
    fn axis_aligned_rays_cross_full_rows() {
        let n = 6;
        for theta in [0.0, 90.0, 180.0, 270.0] {
            for t in [-2.5, -0.3, 0.5, 2.9] {
                let total: f64 = trace_ray(n, theta, t).iter().map(|p| p.1).sum();
                assert!(
                    (total - n as f64).abs() < 1e-12,
                    "theta={theta} t={t} total={total}"
                );
            }
        }
        let row: Vec<usize> = trace_ray(4, 0.0, 1.5).iter().map(|p| p.0).collect();
        assert_eq!(row, vec![0, 1, 2, 3]);
    }

    #[test]
    fn ray_missing_image_is_empty() {
        assert!(trace_ray(4, 0.0, 3.0).is_empty());
        assert!(trace_ray(4, 45.0, 3.0).is_empty());
    }

    #[test]
    fn row_sums_bounded_by_diagonal() {
        let n = 10;
        let a = paralleltomo_matrix(
            n,
            &angle_range(0.0, 7.0, 179.0),
            &ray_offsets(default_rays(n), 1.0),
        )
        .unwrap();
        let sums = a.apply(&vec![1.0; n * n]).unwrap();
        assert!(sums
            .iter()
            .all(|&s| (0.0..=n as f64 * std::f64::consts::SQRT_2 + 1e-12).contains(&s)));
        assert!(a.is_nonneg());
    }

    #[test]
    fn diagonal_ray_through_square() {
        // Through the center at 45 degrees: the full diagonal n√2.
        let total: f64 = trace_ray(5, 45.0, 0.0).iter().map(|p| p.1).sum();
        assert!((total - 5.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_desk_size() {
        let angles = angle_range(0.0, 5.0, 175.0);
        assert_eq!(angles.len(), 36);
        let a = paralleltomo_matrix(64, &angles, &ray_offsets(95, 1.0)).unwrap();
        assert_eq!((a.rows(), a.cols()), (3420, 4096));
    }

    #[test]
    fn opposite_angles_mirror() {
        let n = 16;
        let x = shepp_logan(n);
        let offs = ray_offsets(23, 1.0);
        for theta in [0.0, 30.0, 77.0] {
            let a = paralleltomo_matrix(n, &[theta, theta + 180.0], &offs).unwrap();
            let s = a.apply(&x).unwrap();
            let p = offs.len();
            for k in 0..p {
                assert!(
                    (s[k] - s[p + (p - 1 - k)]).abs() < 1e-10,
                    "theta={theta} k={k}"
                );
            }
        }
    }

    #[test]
    fn phantom_in_unit_interval() {
        let x = shepp_logan(64);
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(x.contains(&1.0));
        assert!(x.iter().any(|&v| v > 0.0 && v < 0.1));
    }

    #[test]
    fn empty_angles_rejected() {
        assert!(matches!(
            make_paralleltomo(8, &[], 11, &NoiseSpec::default()),
            Err(Error::Config(_))
        ));
    }
}
