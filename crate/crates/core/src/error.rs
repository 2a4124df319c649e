use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

/// Condition summary attached to eigen-solver failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixDiagnostics {
    pub dim: usize,
    pub frobenius_norm: f64,
    pub max_abs_entry: f64,
    pub trace: f64,
}

impl fmt::Display for MatrixDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dim={}, ||M||_F={:.3e}, max|m_ij|={:.3e}, trace={:.3e}",
            self.dim, self.frobenius_norm, self.max_abs_entry, self.trace
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("eigendecomposition failed to converge ({0})")]
    EigenNonConvergence(MatrixDiagnostics),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("negative spectrum entry {value} at index {index}")]
    NegativeSpectrum { index: usize, value: f64 },

    #[error(
        "Marchenko-Pastur fixed point did not converge after {iterations} iterations at z={z}: \
         last iterate {last}, residual {residual:.3e}"
    )]
    FixedPoint {
        z: Complex64,
        iterations: usize,
        last: Complex64,
        residual: f64,
    },

    #[error("correction denominator underflow at eigenvalue index {index} (value {value:.3e})")]
    DenominatorUnderflow { index: usize, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
