use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("weight {value} at index {index} is not strictly positive")]
    Weight { index: usize, value: f64 },

    /// The latest direction image `w = A d` has (numerically) zero norm, so the
    /// step length is undefined.
    #[error("search direction vanished at iteration {iteration} (<w, w> = {norm_sq:e})")]
    ZeroDirection { iteration: usize, norm_sq: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("covariance entry {value} at index {index} is not strictly positive")]
    Covariance { index: usize, value: f64 },

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("starting vector for the bidiagonalization is zero")]
    Seed,

    #[error("operator not supported: {0}")]
    UnsupportedOperator(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            context,
            expected,
            found,
        });
    }
    Ok(())
}
