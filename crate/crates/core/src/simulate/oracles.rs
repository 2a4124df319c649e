//! Spectrum oracle versus precision oracle, rank by rank.

use serde::{Deserialize, Serialize};

use super::{csv_line, fmt_f, mean};
use super::lda_grid::{make_lda_population, LdaCellConfig};
use crate::error::{Error, Result};
use crate::estimators::{precision_oracle, sample_covariance, spectrum_oracle};
use crate::linalg::eigendecompose;
use crate::par;
use crate::sampling::{derive_seed, sample_gaussian};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleComparisonConfig {
    pub p: usize,
    pub n: usize,
    /// Spectrum spread; eigenvalues are log-spaced in `[10^-alpha, 10^alpha]`.
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for OracleComparisonConfig {
    fn default() -> Self {
        Self { p: 100, n: 200, alpha: 2.0, reps: 1000, seed: 0 }
    }
}

impl OracleComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        LdaCellConfig { p: self.p, alpha: self.alpha, beta: 0.0, target_bayes: 0.9 }.validate()?;
        if self.n < 1 {
            return Err(Error::Config("n: must be >= 1".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps: must be >= 1".into()));
        }
        Ok(())
    }
}

/// Statistics at one rank (0 = largest sample eigenvalue).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub rank: usize,
    pub sample_eigenvalue: f64,
    pub oracle: f64,
    pub precision_oracle: f64,
    /// Mean over repetitions of `precision_oracle / oracle`.
    pub ratio: f64,
    /// Repetitions where the precision oracle exceeded the spectrum oracle
    /// by more than rounding.
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct OracleComparisonTable {
    pub config: OracleComparisonConfig,
    pub rows: Vec<OracleRow>,
}

impl OracleComparisonTable {
    pub const HEADER: &'static str = "rank,sample_eigenvalue,oracle,precision_oracle,ratio,violations";

    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }

    /// Rank with the smallest mean ratio.
    pub fn argmin_ratio(&self) -> usize {
        self.rows
            .iter()
            .min_by(|a, b| a.ratio.total_cmp(&b.ratio))
            .map_or(0, |r| r.rank)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        csv_line(&mut out, &[Self::HEADER.to_string()]);
        for r in &self.rows {
            csv_line(
                &mut out,
                &[
                    r.rank.to_string(),
                    fmt_f(r.sample_eigenvalue),
                    fmt_f(r.oracle),
                    fmt_f(r.precision_oracle),
                    fmt_f(r.ratio),
                    r.violations.to_string(),
                ],
            );
        }
        out
    }
}

/// Relative slack allowed before `precision > oracle` counts as a violation.
const ROUNDING: f64 = 1e-12;

pub fn run_oracle_comparison(cfg: &OracleComparisonConfig) -> Result<OracleComparisonTable> {
    cfg.validate()?;
    let pop = make_lda_population(&LdaCellConfig { p: cfg.p, alpha: cfg.alpha, beta: 0.0, target_bayes: 0.9 })?;
    let c = pop.covariance();
    let reps = par::map_range(cfg.reps, |r| -> Result<[Vec<f64>; 3]> {
        let x = sample_gaussian(&pop.model, cfg.n, derive_seed(cfg.seed, &[r as u64]))?;
        let basis = eigendecompose(&sample_covariance(&x)?)?;
        let star = spectrum_oracle(&basis, &c)?;
        let diamond = precision_oracle(&basis, &c)?;
        Ok([basis.eigenvalues, star, diamond])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let rows = (0..cfg.p)
        .map(|i| {
            let col = |k: usize| reps.iter().map(|r| r[k][i]).collect::<Vec<_>>();
            let ratios: Vec<f64> = reps.iter().map(|r| r[2][i] / r[1][i]).collect();
            OracleRow {
                rank: i,
                sample_eigenvalue: mean(&col(0)),
                oracle: mean(&col(1)),
                precision_oracle: mean(&col(2)),
                ratio: mean(&ratios),
                violations: reps.iter().filter(|r| r[2][i] > r[1][i] * (1.0 + ROUNDING)).count(),
            }
        })
        .collect();
    Ok(OracleComparisonTable { config: cfg.clone(), rows })
}
