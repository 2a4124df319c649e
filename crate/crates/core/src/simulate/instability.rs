//! Variance of leave-one-out projections versus data-independent ones on an
//! identity population.

use serde::{Deserialize, Serialize};

use super::{csv_line, fmt_f, mean, variance};
use crate::error::{Error, Result};
use crate::estimators::{cross_validate, loo_folds, sample_covariance, Projection};
use crate::linalg::eigendecompose;
use crate::par;
use crate::sampling::{derive_seed, random_rotation, sample_gaussian, SpectrumModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LooInstabilityConfig {
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for LooInstabilityConfig {
    fn default() -> Self {
        Self { p: 50, n: 1000, reps: 100, seed: 0 }
    }
}

impl LooInstabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::Config("p: must be >= 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Config("n: must be >= 2".into()));
        }
        if self.reps < 2 {
            return Err(Error::Config("reps: must be >= 2 to estimate a variance".into()));
        }
        Ok(())
    }
}

/// Statistics at one eigen-index (0 = largest sample eigenvalue).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstabilityRow {
    pub index: usize,
    pub sample_eigenvalue: f64,
    pub loo_mean: f64,
    pub loo_variance: f64,
    pub projection_mean: f64,
    pub projection_variance: f64,
    /// Mean over repetitions of the mean `|v_i^T v_i^(-t)|` over left-out rows.
    pub stability: f64,
}

#[derive(Debug, Clone)]
pub struct LooInstabilityTable {
    pub config: LooInstabilityConfig,
    pub rows: Vec<InstabilityRow>,
}

impl LooInstabilityTable {
    pub const HEADER: &'static str =
        "index,sample_eigenvalue,loo_mean,loo_variance,projection_mean,projection_variance,stability";

    /// Projection variance averaged over indices; about `2/n`.
    pub fn mean_projection_variance(&self) -> f64 {
        mean(&self.rows.iter().map(|r| r.projection_variance).collect::<Vec<_>>())
    }

    pub fn max_loo_variance(&self) -> f64 {
        self.rows.iter().map(|r| r.loo_variance).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        csv_line(&mut out, &[Self::HEADER.to_string()]);
        for r in &self.rows {
            csv_line(
                &mut out,
                &[
                    r.index.to_string(),
                    fmt_f(r.sample_eigenvalue),
                    fmt_f(r.loo_mean),
                    fmt_f(r.loo_variance),
                    fmt_f(r.projection_mean),
                    fmt_f(r.projection_variance),
                    fmt_f(r.stability),
                ],
            );
        }
        out
    }
}

struct Rep {
    sample: Vec<f64>,
    loo: Vec<f64>,
    projection: Vec<f64>,
    stability: Vec<f64>,
}

fn run_rep(cfg: &LooInstabilityConfig, rep: usize) -> Result<Rep> {
    let seed = |k: u64| derive_seed(cfg.seed, &[rep as u64, k]);
    let model = SpectrumModel::new(vec![1.0; cfg.p])?;
    let x = sample_gaussian(&model, cfg.n, seed(0))?;
    let s = sample_covariance(&x)?;
    let basis = eigendecompose(&s)?;
    let cv = cross_validate(&x, &loo_folds(cfg.n), Projection::Transposed, Some(&basis))?;
    // Fixed directions drawn independently of the data.
    let u = random_rotation(cfg.p, seed(1))?;
    let su = s.as_matrix() * &u;
    let projection = (0..cfg.p).map(|i| u.column(i).dot(&su.column(i))).collect();
    Ok(Rep {
        sample: basis.eigenvalues,
        loo: cv.spectrum,
        projection,
        stability: cv.stability.expect("reference basis supplied"),
    })
}

pub fn run_loo_instability(cfg: &LooInstabilityConfig) -> Result<LooInstabilityTable> {
    cfg.validate()?;
    let reps: Vec<Rep> = par::map_range(cfg.reps, |r| run_rep(cfg, r)).into_iter().collect::<Result<_>>()?;
    let column = |i: usize, f: fn(&Rep) -> &Vec<f64>| reps.iter().map(|r| f(r)[i]).collect::<Vec<_>>();
    let rows = (0..cfg.p)
        .map(|i| {
            let loo = column(i, |r| &r.loo);
            let proj = column(i, |r| &r.projection);
            InstabilityRow {
                index: i,
                sample_eigenvalue: mean(&column(i, |r| &r.sample)),
                loo_mean: mean(&loo),
                loo_variance: variance(&loo),
                projection_mean: mean(&proj),
                projection_variance: variance(&proj),
                stability: mean(&column(i, |r| &r.stability)),
            }
        })
        .collect();
    Ok(LooInstabilityTable { config: cfg.clone(), rows })
}
