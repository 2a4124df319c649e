//! Squared Frobenius loss and the sample-eigenbasis improvement percentage.
//!
//! For repetition `r` let `a_r = ||S_r - S*_r||^2` (sample covariance) and
//! `b_r = ||C_r - S*_r||^2` (estimator), where `S*_r` rebuilds the spectrum
//! oracle on the sample eigenbasis. The score is `100 (1 - mean(b) / mean(a))`:
//! 0 for the sample covariance, 100 for the oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;

/// `||estimate - truth||_F^2`.
pub fn ese(estimate: &SymmetricMatrix, truth: &SymmetricMatrix) -> Result<f64> {
    estimate.frobenius_distance_sq(truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeprialResult {
    pub value: f64,
    pub reps: usize,
    /// Delta-method standard error over repetitions (NaN with one repetition).
    pub se: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidInput("no repetitions".into()));
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(())
}

/// Score from per-repetition losses of the sample covariance (`a`) and the
/// estimator (`b`), both measured against the oracle matrix.
pub fn seprial_from_losses(a: &[f64], b: &[f64]) -> Result<SeprialResult> {
    check_lengths(a, b)?;
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    if !(sa > 0.0) {
        return Err(Error::InvalidInput("sample covariance equals the oracle in every repetition".into()));
    }
    let value = 100.0 * (1.0 - sb / sa);
    let ratio = sb / sa;
    let abar = sa / a.len() as f64;
    let lin: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - ratio * x).collect();
    let se = 100.0 * sd(&lin) / (abar * (a.len() as f64).sqrt());
    Ok(SeprialResult { value, reps: a.len(), se })
}

pub fn seprial(
    estimates: &[SymmetricMatrix],
    samples: &[SymmetricMatrix],
    oracles: &[SymmetricMatrix],
) -> Result<SeprialResult> {
    if estimates.len() != samples.len() || samples.len() != oracles.len() {
        return Err(Error::DimensionMismatch { expected: samples.len(), got: estimates.len().min(oracles.len()) });
    }
    let mut a = Vec::with_capacity(samples.len());
    let mut b = Vec::with_capacity(samples.len());
    for ((c, s), o) in estimates.iter().zip(samples).zip(oracles) {
        a.push(ese(s, o)?);
        b.push(ese(c, o)?);
    }
    seprial_from_losses(&a, &b)
}

/// Difference of scores `score(b2) - score(b1)` on shared repetitions, with
/// a paired standard error.
pub fn seprial_gap(a: &[f64], b1: &[f64], b2: &[f64]) -> Result<(f64, f64)> {
    check_lengths(a, b1)?;
    check_lengths(a, b2)?;
    let abar = mean(a);
    if !(abar > 0.0) {
        return Err(Error::InvalidInput("sample covariance equals the oracle in every repetition".into()));
    }
    let d: Vec<f64> = b1.iter().zip(b2).map(|(x, y)| x - y).collect();
    let ratio = mean(&d) / abar;
    let lin: Vec<f64> = d.iter().zip(a).map(|(di, ai)| di - ratio * ai).collect();
    Ok((100.0 * ratio, 100.0 * sd(&lin) / (abar * (a.len() as f64).sqrt())))
}

/// JSON record for one (method, shape) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeprialRecord {
    pub method: String,
    pub p: usize,
    pub n: usize,
    pub seprial: f64,
    pub se: f64,
    pub reps: usize,
}

impl SeprialRecord {
    pub fn new(method: impl Into<String>, p: usize, n: usize, r: &SeprialResult) -> Self {
        Self { method: method.into(), p, n, seprial: r.value, se: r.se, reps: r.reps }
    }
}
