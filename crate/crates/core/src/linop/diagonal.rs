use super::LinearMap;
use crate::error::{Error, Result};

/// `diag(d)` with nonnegative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOperator {
    diag: Vec<f64>,
}

impl DiagonalOperator {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::Precondition(
                "diagonal operator must be nonempty".into(),
            ));
        }
        if let Some((i, v)) = diag.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::InvariantViolation(format!(
                "diagonal entry {i} is {v}, expected a nonnegative value"
            )));
        }
        Ok(DiagonalOperator { diag })
    }

    pub fn identity(n: usize) -> Self {
        DiagonalOperator { diag: vec![1.0; n] }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.diag
    }
}

impl LinearMap for DiagonalOperator {
    fn rows(&self) -> usize {
        self.diag.len()
    }

    fn cols(&self) -> usize {
        self.diag.len()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for ((o, d), x) in out.iter_mut().zip(&self.diag).zip(v) {
            *o = d * x;
        }
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        self.apply_into(v, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_action() {
        let d = DiagonalOperator::new(vec![2.0, 3.0]).unwrap();
        assert_eq!(d.apply(&[1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(d.apply_transpose(&[1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn negative_entry_rejected() {
        assert!(matches!(
            DiagonalOperator::new(vec![1.0, -0.5]),
            Err(Error::InvariantViolation(_))
        ));
        assert!(DiagonalOperator::new(vec![f64::NAN]).is_err());
    }
}
