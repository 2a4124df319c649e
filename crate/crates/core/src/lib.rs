//! Covariance estimation by spectrum correction.
//!
//! Every estimator here keeps the eigenvectors of the sample covariance and
//! replaces its eigenvalues: cross-validated correction (optionally made
//! monotone by isotonic regression), linear shrinkage, nonlinear shrinkage
//! from random-matrix theory, and the two oracles that know the population.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimators;
pub mod io;
pub mod lda;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod rmt;
pub mod sampling;
pub mod selftest;
pub mod simulate;

pub use error::{Error, Result};
