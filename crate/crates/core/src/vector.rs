//! Small dense-vector kernels shared by the solvers.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_i m_i a_i b_i`; with `metric = None` this is the plain inner product.
#[inline]
pub fn dot_with(metric: Option<&[f64]>, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        None => dot(a, b),
        Some(m) => {
            debug_assert_eq!(m.len(), a.len());
            m.iter()
                .zip(a.iter().zip(b))
                .map(|(w, (x, y))| w * x * y)
                .sum()
        }
    }
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `a - b`
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

pub fn project_nonneg(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub fn is_nonneg(x: &[f64]) -> bool {
    x.iter().all(|&v| v >= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_dot_reduces_to_plain() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, -1.0, 0.5];
        assert_eq!(dot_with(None, &a, &b), dot(&a, &b));
        assert_eq!(dot_with(Some(&[1.0, 1.0, 1.0]), &a, &b), dot(&a, &b));
        assert_eq!(dot_with(Some(&[2.0, 0.0, 1.0]), &a, &b), 8.0 + 1.5);
    }
}
