//! Nonnegative flexible Krylov solvers for linear inverse problems.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod covariance;
pub mod error;
pub mod fcgls;
pub mod harness;
pub mod history;
pub mod linop;
pub mod nn;
pub mod noise;
pub mod problems;
pub mod stopping;
pub mod vector;

pub use error::{Error, Result};
