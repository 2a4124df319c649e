//! Two-class LDA over a grid of spectrum spreads (`alpha`) and
//! signal placements (`beta`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{csv_line, fmt_f, mean, variance};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorOptions, Method};
use crate::lda::{accuracy, bayes_accuracy, fit_lda, LabeledData, LdaCovariance};
use crate::linalg::SymmetricMatrix;
use crate::par;
use crate::sampling::{derive_seed, sample_gaussian_shifted, SpectrumModel};

/// One population: `p` log-spaced eigenvalues in `[10^-alpha, 10^alpha]`
/// and class means calibrated to a target Bayes accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaCellConfig {
    pub p: usize,
    pub alpha: f64,
    pub beta: f64,
    pub target_bayes: f64,
}

impl LdaCellConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::Config("p: must be >= 2".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha: {} must be finite and >= 0", self.alpha)));
        }
        if !self.beta.is_finite() {
            return Err(Error::Config("beta: must be finite".into()));
        }
        if !(self.target_bayes > 0.5 && self.target_bayes < 1.0) {
            return Err(Error::Config(format!("target_bayes: {} must lie in (0.5, 1)", self.target_bayes)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LdaPopulation {
    /// Diagonal population spectrum, descending.
    pub model: SpectrumModel,
    pub mean_a: DVector<f64>,
    pub mean_b: DVector<f64>,
}

impl LdaPopulation {
    pub fn covariance(&self) -> SymmetricMatrix {
        self.model.covariance()
    }

    pub fn bayes_accuracy(&self) -> Result<f64> {
        bayes_accuracy(&self.mean_a, &self.mean_b, &self.covariance())
    }
}

/// `10^(e (1 - 2i/(p-1)))` for `i = 0..p`: from `10^e` down to `10^-e`.
fn log_spaced(p: usize, e: f64) -> Vec<f64> {
    (0..p).map(|i| 10f64.powf(e * (1.0 - 2.0 * i as f64 / (p - 1) as f64))).collect()
}

/// Eigenvalues `gamma_i` descend from `10^alpha`; the per-direction signal
/// `s_i = mu_i / (c sqrt(gamma_i))` rises from `10^-beta` at the largest
/// eigenvalue to `10^beta` at the smallest, so `beta > 0` puts the class
/// difference in low-variance directions. `mu_A = 0` and `c` is chosen so the
/// Bayes accuracy `Phi(Delta / 2)` equals `target_bayes`.
pub fn make_lda_population(cfg: &LdaCellConfig) -> Result<LdaPopulation> {
    cfg.validate()?;
    let gamma = log_spaced(cfg.p, cfg.alpha);
    let s = log_spaced(cfg.p, -cfg.beta);
    let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let z = Normal::standard().inverse_cdf(cfg.target_bayes);
    let c = 2.0 * z / norm;
    let mean_b = DVector::from_iterator(cfg.p, gamma.iter().zip(&s).map(|(g, si)| c * g.sqrt() * si));
    Ok(LdaPopulation { model: SpectrumModel::new(gamma)?, mean_a: DVector::zeros(cfg.p), mean_b })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaGridConfig {
    pub p: usize,
    /// Training observations, split evenly between the classes.
    pub n: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub target_bayes: f64,
    pub reps: usize,
    pub seed: u64,
    /// Fresh balanced test points per repetition, shared by all estimators.
    pub test_size: usize,
    pub folds: usize,
    pub estimators: Vec<LdaCovariance>,
}

impl Default for LdaGridConfig {
    fn default() -> Self {
        Self {
            p: 100,
            n: 200,
            alphas: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            betas: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            target_bayes: 0.9,
            reps: 100,
            seed: 0,
            test_size: 10_000,
            folds: 10,
            estimators: vec![
                LdaCovariance::Population,
                LdaCovariance::Estimated(Method::Sample),
                LdaCovariance::Estimated(Method::Lw),
                LdaCovariance::Estimated(Method::Oracle),
                LdaCovariance::Estimated(Method::PrecisionOracle),
                LdaCovariance::Estimated(Method::IsoKFoldCvc),
                LdaCovariance::Centroid,
            ],
        }
    }
}

impl LdaGridConfig {
    pub fn cell(&self, alpha: f64, beta: f64) -> LdaCellConfig {
        LdaCellConfig { p: self.p, alpha, beta, target_bayes: self.target_bayes }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.n < 4 || !self.n.is_multiple_of(2) {
            return bad("n: must be even and >= 4");
        }
        if self.alphas.is_empty() || self.betas.is_empty() {
            return bad("alphas/betas: must not be empty");
        }
        for &a in &self.alphas {
            for &b in &self.betas {
                self.cell(a, b).validate()?;
            }
        }
        if self.reps == 0 {
            return bad("reps: must be >= 1");
        }
        if self.test_size < 2 || !self.test_size.is_multiple_of(2) {
            return bad("test_size: must be even and >= 2");
        }
        if self.estimators.is_empty() {
            return bad("estimators: must not be empty");
        }
        if self.folds < 2 {
            return bad("folds: must be >= 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdaRow {
    pub alpha: f64,
    pub beta: f64,
    pub estimator: LdaCovariance,
    pub reps: usize,
    pub accuracy: f64,
    pub se: f64,
    pub bayes: f64,
    pub failures: usize,
}

/// Per-repetition test accuracies of one grid cell, estimator-major.
#[derive(Debug, Clone)]
pub struct LdaCell {
    pub alpha: f64,
    pub beta: f64,
    pub bayes: f64,
    pub accuracies: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone)]
pub struct LdaGridTable {
    pub config: LdaGridConfig,
    pub rows: Vec<LdaRow>,
    pub cells: Vec<LdaCell>,
}

impl LdaGridTable {
    pub const HEADER: &'static str = "alpha,beta,estimator,reps,accuracy,se,bayes,failures";

    pub fn row(&self, alpha: f64, beta: f64, est: LdaCovariance) -> Option<&LdaRow> {
        self.rows.iter().find(|r| r.alpha == alpha && r.beta == beta && r.estimator == est)
    }

    /// Mean and standard error of `accuracy(second) - accuracy(first)`,
    /// paired over repetitions where both succeeded.
    pub fn difference(&self, alpha: f64, beta: f64, first: LdaCovariance, second: LdaCovariance) -> Option<(f64, f64)> {
        let cell = self.cells.iter().find(|c| c.alpha == alpha && c.beta == beta)?;
        let idx = |e: LdaCovariance| self.config.estimators.iter().position(|x| *x == e);
        let (i, j) = (idx(first)?, idx(second)?);
        let d: Vec<f64> = cell.accuracies[i]
            .iter()
            .zip(&cell.accuracies[j])
            .filter_map(|(a, b)| Some((*b)? - (*a)?))
            .collect();
        if d.is_empty() {
            return None;
        }
        Some((mean(&d), (variance(&d) / d.len() as f64).sqrt()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        csv_line(&mut out, &[Self::HEADER.to_string()]);
        for r in &self.rows {
            csv_line(
                &mut out,
                &[
                    r.alpha.to_string(),
                    r.beta.to_string(),
                    r.estimator.to_string(),
                    r.reps.to_string(),
                    fmt_f(r.accuracy),
                    fmt_f(r.se),
                    fmt_f(r.bayes),
                    r.failures.to_string(),
                ],
            );
        }
        out
    }
}

fn run_rep(
    cfg: &LdaGridConfig,
    pop: &LdaPopulation,
    population: &SymmetricMatrix,
    coords: [u64; 2],
    rep: usize,
) -> Result<Vec<Option<f64>>> {
    let seed = |k: u64| derive_seed(cfg.seed, &[coords[0], coords[1], rep as u64, k]);
    let half = cfg.n / 2;
    let draw = |mean: &DVector<f64>, rows: usize, k: u64| -> Result<DMatrix<f64>> {
        sample_gaussian_shifted(&pop.model, mean, rows, seed(k))
    };
    let train = LabeledData::from_classes(draw(&pop.mean_a, half, 0)?, draw(&pop.mean_b, half, 1)?)?;
    let test_half = cfg.test_size / 2;
    let test = LabeledData::from_classes(draw(&pop.mean_a, test_half, 2)?, draw(&pop.mean_b, test_half, 3)?)?;
    let opts = EstimatorOptions { folds: cfg.folds, seed: seed(4), population: Some(population.clone()), ..Default::default() };
    Ok(cfg
        .estimators
        .iter()
        .map(|&e| fit_lda(&train, e, &opts).and_then(|m| accuracy(&m, &test)).ok())
        .collect())
}

/// Runs every `(alpha, beta, repetition)` triple, in parallel. Estimator
/// failures are recorded per cell.
pub fn run_lda_grid(cfg: &LdaGridConfig) -> Result<LdaGridTable> {
    cfg.validate()?;
    let mut cells_cfg = Vec::new();
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        for (bi, &beta) in cfg.betas.iter().enumerate() {
            let pop = make_lda_population(&cfg.cell(alpha, beta))?;
            let population = pop.covariance();
            cells_cfg.push(([ai as u64, bi as u64], alpha, beta, pop, population));
        }
    }
    let k = cfg.estimators.len();
    let results = par::map_range(cells_cfg.len() * cfg.reps, |job| {
        let (cell, rep) = (job / cfg.reps, job % cfg.reps);
        let (coords, _, _, pop, population) = &cells_cfg[cell];
        run_rep(cfg, pop, population, *coords, rep).unwrap_or_else(|_| vec![None; k])
    });

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (ci, (_, alpha, beta, pop, _)) in cells_cfg.iter().enumerate() {
        let bayes = pop.bayes_accuracy()?;
        let reps = &results[ci * cfg.reps..(ci + 1) * cfg.reps];
        let accuracies: Vec<Vec<Option<f64>>> = (0..k).map(|e| reps.iter().map(|r| r[e]).collect()).collect();
        for (e, accs) in cfg.estimators.iter().zip(&accuracies) {
            let ok: Vec<f64> = accs.iter().flatten().copied().collect();
            let (acc, se) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (mean(&ok), (variance(&ok) / ok.len() as f64).sqrt())
            };
            rows.push(LdaRow {
                alpha: *alpha,
                beta: *beta,
                estimator: *e,
                reps: ok.len(),
                accuracy: acc,
                se,
                bayes,
                failures: accs.len() - ok.len(),
            });
        }
        cells.push(LdaCell { alpha: *alpha, beta: *beta, bayes, accuracies });
    }
    Ok(LdaGridTable { config: cfg.clone(), rows, cells })
}
