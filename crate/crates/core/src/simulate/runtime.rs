//! Single-threaded wall-clock timings of the estimators.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{csv_line, fmt_f};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorOptions, Method};
use crate::par;
use crate::rmt::RmtConfig;
use crate::sampling::{derive_seed, sample_gaussian, SpectrumModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub p_values: Vec<usize>,
    /// `p / n`.
    pub ratio: f64,
    pub estimators: Vec<Method>,
    pub reps: usize,
    pub seed: u64,
    pub folds: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            p_values: vec![50, 100, 200],
            ratio: 1.0 / 3.0,
            estimators: vec![Method::LooCvc, Method::KFoldCvc, Method::IsoKFoldCvc, Method::Nls],
            reps: 3,
            seed: 0,
            folds: 10,
        }
    }
}

impl RuntimeConfig {
    pub fn n_for(&self, p: usize) -> usize {
        (p as f64 / self.ratio).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.p_values.is_empty() || self.p_values.iter().any(|&p| p < 2) {
            return bad("p_values: must be non-empty, each >= 2");
        }
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return bad("ratio: must be positive");
        }
        if self.estimators.is_empty() {
            return bad("estimators: must not be empty");
        }
        if self.reps == 0 {
            return bad("reps: must be >= 1");
        }
        if self.folds < 2 {
            return bad("folds: must be >= 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeRow {
    pub p: usize,
    pub n: usize,
    pub estimator: Method,
    pub reps: usize,
    pub median_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct RuntimeTable {
    pub config: RuntimeConfig,
    pub rows: Vec<RuntimeRow>,
}

impl RuntimeTable {
    pub const HEADER: &'static str = "p,n,estimator,reps,median_seconds,min_seconds,max_seconds,failures";

    pub fn row(&self, p: usize, m: Method) -> Option<&RuntimeRow> {
        self.rows.iter().find(|r| r.p == p && r.estimator == m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        csv_line(&mut out, &[Self::HEADER.to_string()]);
        for r in &self.rows {
            csv_line(
                &mut out,
                &[
                    r.p.to_string(),
                    r.n.to_string(),
                    r.estimator.to_string(),
                    r.reps.to_string(),
                    fmt_f(r.median_seconds),
                    fmt_f(r.min_seconds),
                    fmt_f(r.max_seconds),
                    r.failures.to_string(),
                ],
            );
        }
        out
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Times each estimator on the same block-spectrum data, one repetition at a
/// time, inside a one-thread pool.
pub fn run_runtime_bench(cfg: &RuntimeConfig, rmt: &RmtConfig) -> Result<RuntimeTable> {
    cfg.validate()?;
    rmt.validate()?;
    par::with_threads(Some(1), || {
        let mut rows = Vec::new();
        for (pi, &p) in cfg.p_values.iter().enumerate() {
            let n = cfg.n_for(p);
            let model = SpectrumModel::block(p, &[0.2, 0.4, 0.4], &[1.0, 3.0, 10.0])?;
            let opts = EstimatorOptions {
                folds: cfg.folds,
                seed: derive_seed(cfg.seed, &[pi as u64, u64::MAX]),
                population: Some(model.covariance()),
                rmt: rmt.clone(),
            };
            let mut times = vec![Vec::new(); cfg.estimators.len()];
            let mut failures = vec![0; cfg.estimators.len()];
            for rep in 0..cfg.reps {
                let x = sample_gaussian(&model, n, derive_seed(cfg.seed, &[pi as u64, rep as u64]))?;
                for (k, &m) in cfg.estimators.iter().enumerate() {
                    let t0 = Instant::now();
                    let ok = estimate(&x, m, &opts).is_ok();
                    let dt = t0.elapsed().as_secs_f64();
                    if ok {
                        times[k].push(dt);
                    } else {
                        failures[k] += 1;
                    }
                }
            }
            for (k, &m) in cfg.estimators.iter().enumerate() {
                let t = &mut times[k];
                rows.push(RuntimeRow {
                    p,
                    n,
                    estimator: m,
                    reps: t.len(),
                    median_seconds: median(t),
                    min_seconds: t.first().copied().unwrap_or(f64::NAN),
                    max_seconds: t.last().copied().unwrap_or(f64::NAN),
                    failures: failures[k],
                });
            }
        }
        Ok(RuntimeTable { config: cfg.clone(), rows })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn tiny_run() {
        let cfg = RuntimeConfig {
            p_values: vec![10],
            estimators: vec![Method::Sample, Method::KFoldCvc],
            reps: 2,
            ..Default::default()
        };
        let t = run_runtime_bench(&cfg, &RmtConfig::default()).unwrap();
        assert_eq!(t.rows.len(), 2);
        let r = t.row(10, Method::KFoldCvc).unwrap();
        assert_eq!((r.n, r.reps, r.failures), (30, 2, 0));
        assert!(r.min_seconds <= r.median_seconds && r.median_seconds <= r.max_seconds);
    }
}
