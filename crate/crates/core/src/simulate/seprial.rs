//! Estimation error on a block spectrum, aligned and randomly rotated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{csv_line, fmt_f};
use crate::error::{Error, Result};
use crate::estimators::{
    buggy_loo_spectrum, isotonic_correct, kfold_spectrum, loo_spectrum, lw_intensity, precision_oracle, rebuild,
    sample_covariance, shrink_spectrum, spectrum_oracle, Method,
};
use crate::linalg::{eigendecompose, DataMatrix, SymmetricMatrix};
use crate::metrics::{ese, seprial_from_losses, seprial_gap, SeprialResult};
use crate::par;
use crate::rmt::{fit_nls, Concentration, RmtConfig};
use crate::sampling::{derive_seed, random_rotation, sample_gaussian, SpectrumModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeprialGridConfig {
    pub spectrum_fractions: Vec<f64>,
    pub spectrum_levels: Vec<f64>,
    /// `p / n`.
    pub ratio: f64,
    pub p_values: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<Method>,
    /// Fold count for the K-fold estimators.
    pub folds: usize,
    /// Also run every repetition on randomly rotated data.
    pub rotated: bool,
}

impl Default for SeprialGridConfig {
    fn default() -> Self {
        Self {
            spectrum_fractions: vec![0.2, 0.4, 0.4],
            spectrum_levels: vec![1.0, 3.0, 10.0],
            ratio: 1.0 / 3.0,
            p_values: vec![30, 60, 90],
            reps: 50,
            seed: 0,
            estimators: vec![
                Method::Sample,
                Method::Lw,
                Method::LooCvc,
                Method::IsoLooCvc,
                Method::KFoldCvc,
                Method::IsoKFoldCvc,
                Method::BuggyLooCvc,
                Method::Oracle,
            ],
            folds: 10,
            rotated: true,
        }
    }
}

impl SeprialGridConfig {
    pub fn n_for(&self, p: usize) -> usize {
        (p as f64 / self.ratio).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.spectrum_fractions.is_empty() || self.spectrum_fractions.len() != self.spectrum_levels.len() {
            return bad("spectrum_fractions: must be non-empty and as long as spectrum_levels".into());
        }
        let total: f64 = self.spectrum_fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.spectrum_fractions.iter().any(|f| !(*f >= 0.0)) {
            return bad(format!("spectrum_fractions: must be non-negative and sum to 1 (sum is {total})"));
        }
        if self.spectrum_levels.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad("spectrum_levels: must be positive and finite".into());
        }
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return bad("ratio: must be positive".into());
        }
        if self.p_values.is_empty() {
            return bad("p_values: must not be empty".into());
        }
        for &p in &self.p_values {
            if p < 2 {
                return bad(format!("p_values: {p} is below 2"));
            }
            for f in &self.spectrum_fractions {
                let k = f * p as f64;
                if (k - k.round()).abs() > 1e-9 {
                    return bad(format!("p_values: {p} does not split exactly into fractions {:?}", self.spectrum_fractions));
                }
            }
            if self.n_for(p) < 2 {
                return bad(format!("ratio: p = {p} gives fewer than 2 observations"));
            }
        }
        if self.reps == 0 {
            return bad("reps: must be >= 1".into());
        }
        if self.estimators.is_empty() {
            return bad("estimators: must not be empty".into());
        }
        if self.folds < 2 {
            return bad("folds: must be >= 2".into());
        }
        Ok(())
    }

    pub fn model(&self, p: usize) -> Result<SpectrumModel> {
        SpectrumModel::block(p, &self.spectrum_fractions, &self.spectrum_levels)
    }
}

/// Per-repetition losses for one `(p, orientation)` cell. `None` marks a
/// failed repetition or estimator.
#[derive(Debug, Clone, Default)]
pub struct LossSet {
    pub sample: Vec<Option<f64>>,
    pub estimators: BTreeMap<Method, Vec<Option<f64>>>,
}

impl LossSet {
    /// Paired `(a, b)` over repetitions where both are available.
    fn paired(&self, m: Method) -> Option<(Vec<f64>, Vec<f64>)> {
        let b = self.estimators.get(&m)?;
        Some(self.sample.iter().zip(b).filter_map(|(a, b)| Some(((*a)?, (*b)?))).unzip())
    }

    pub fn score(&self, m: Method) -> Option<SeprialResult> {
        let (a, b) = self.paired(m)?;
        seprial_from_losses(&a, &b).ok()
    }

    pub fn failures(&self, m: Method) -> usize {
        self.estimators.get(&m).map_or(0, |b| b.iter().filter(|x| x.is_none()).count())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeprialRow {
    pub p: usize,
    pub n: usize,
    pub estimator: Method,
    pub reps: usize,
    pub seprial: f64,
    pub se: f64,
    pub seprial_rotated: f64,
    pub se_rotated: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct SeprialTable {
    pub config: SeprialGridConfig,
    pub rows: Vec<SeprialRow>,
    /// Keyed by `(p, rotated)`.
    pub losses: BTreeMap<(usize, bool), LossSet>,
}

impl SeprialTable {
    pub const HEADER: &'static str = "p,n,estimator,reps,seprial,se,seprial_rotated,se_rotated,failures";

    pub fn row(&self, p: usize, m: Method) -> Option<&SeprialRow> {
        self.rows.iter().find(|r| r.p == p && r.estimator == m)
    }

    /// `score(second) - score(first)` with a paired standard error.
    pub fn gap(&self, p: usize, first: Method, second: Method, rotated: bool) -> Result<(f64, f64)> {
        let set = self
            .losses
            .get(&(p, rotated))
            .ok_or_else(|| Error::InvalidInput(format!("no cell for p = {p}, rotated = {rotated}")))?;
        let missing = |m: Method| Error::InvalidInput(format!("estimator {m} was not run"));
        let b1 = set.estimators.get(&first).ok_or_else(|| missing(first))?;
        let b2 = set.estimators.get(&second).ok_or_else(|| missing(second))?;
        let mut a = Vec::new();
        let (mut x1, mut x2) = (Vec::new(), Vec::new());
        for ((ai, u), v) in set.sample.iter().zip(b1).zip(b2) {
            if let (Some(ai), Some(u), Some(v)) = (ai, u, v) {
                a.push(*ai);
                x1.push(*u);
                x2.push(*v);
            }
        }
        seprial_gap(&a, &x1, &x2)
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
                    fmt_f(r.seprial),
                    fmt_f(r.se),
                    fmt_f(r.seprial_rotated),
                    fmt_f(r.se_rotated),
                    r.failures.to_string(),
                ],
            );
        }
        out
    }
}

type Outcome = std::result::Result<Vec<f64>, String>;

/// Sample-covariance loss and per-estimator losses of one repetition.
type RepLosses = (f64, Vec<Option<f64>>);

fn needs(methods: &[Method], any: &[Method]) -> bool {
    methods.iter().any(|m| any.contains(m))
}

/// Losses of the sample covariance and of each estimator against the oracle
/// matrix for one data set. Fits shared between estimators (the CV runs and
/// the NLS population fit) are computed once.
fn rep_losses(
    x: &DataMatrix,
    population: &SymmetricMatrix,
    methods: &[Method],
    folds: usize,
    fold_seed: u64,
    rmt: &RmtConfig,
) -> Result<RepLosses> {
    let s = sample_covariance(x)?;
    let basis = eigendecompose(&s)?;
    let oracle = spectrum_oracle(&basis, population)?;
    let target = rebuild(&basis, &oracle)?;
    let a = ese(&s, &target)?;

    let msg = |e: Error| e.to_string();
    let loo: Option<Outcome> =
        needs(methods, &[Method::LooCvc, Method::IsoLooCvc]).then(|| loo_spectrum(x).map_err(msg));
    let kfold: Option<Outcome> = needs(methods, &[Method::KFoldCvc, Method::IsoKFoldCvc])
        .then(|| kfold_spectrum(x, folds, fold_seed).map_err(msg));
    let nls = needs(methods, &[Method::Nls, Method::NlsPrecision]).then(|| {
        Concentration::from_shape(x.rows(), x.cols())
            .and_then(|c| fit_nls(&basis.eigenvalues, c, rmt))
            .map_err(msg)
    });
    let cached = |c: &Option<Outcome>| c.clone().expect("computed when needed");

    let losses = methods
        .iter()
        .map(|&m| {
            if m == Method::Sample {
                return Some(a);
            }
            let spectrum: Outcome = match m {
                Method::Sample => unreachable!(),
                Method::Lw => lw_intensity(x, &s).map(|sh| shrink_spectrum(&basis.eigenvalues, sh.lambda)).map_err(msg),
                Method::LooCvc => cached(&loo),
                Method::IsoLooCvc => cached(&loo).map(|v| isotonic_correct(&v)),
                Method::KFoldCvc => cached(&kfold),
                Method::IsoKFoldCvc => cached(&kfold).map(|v| isotonic_correct(&v)),
                Method::BuggyLooCvc => buggy_loo_spectrum(x).map_err(msg),
                Method::Oracle => Ok(oracle.clone()),
                Method::PrecisionOracle => precision_oracle(&basis, population).map_err(msg),
                Method::Nls | Method::NlsPrecision => {
                    let fit = nls.as_ref().expect("computed when needed").as_ref().ok()?;
                    let spec = if m == Method::Nls { fit.covariance_spectrum() } else { fit.precision_spectrum() };
                    spec.map_err(msg)
                }
            };
            let spectrum = spectrum.ok()?;
            rebuild(&basis, &spectrum).and_then(|c| ese(&c, &target)).ok()
        })
        .collect();
    Ok((a, losses))
}

struct RepResult {
    aligned: Option<RepLosses>,
    rotated: Option<RepLosses>,
}

fn run_rep(cfg: &SeprialGridConfig, rmt: &RmtConfig, pi: usize, p: usize, rep: usize) -> RepResult {
    let coords = |k: u64| derive_seed(cfg.seed, &[pi as u64, rep as u64, k]);
    let n = cfg.n_for(p);
    let run = || -> Result<RepResult> {
        let model = cfg.model(p)?;
        let population = model.covariance();
        let x = sample_gaussian(&model, n, coords(0))?;
        let fold_seed = coords(1);
        let aligned = rep_losses(&x, &population, &cfg.estimators, cfg.folds, fold_seed, rmt).ok();
        let rotated = if cfg.rotated {
            let q = random_rotation(p, coords(2))?;
            let xr = x.rotated(&q)?;
            let pr = SymmetricMatrix::symmetrize(&q * population.as_matrix() * q.transpose())?;
            rep_losses(&xr, &pr, &cfg.estimators, cfg.folds, fold_seed, rmt).ok()
        } else {
            None
        };
        Ok(RepResult { aligned, rotated })
    };
    run().unwrap_or(RepResult { aligned: None, rotated: None })
}

fn collect(methods: &[Method], reps: &[Option<RepLosses>]) -> LossSet {
    let mut set = LossSet::default();
    for m in methods {
        set.estimators.insert(*m, Vec::with_capacity(reps.len()));
    }
    for r in reps {
        set.sample.push(r.as_ref().map(|(a, _)| *a));
        for (k, m) in methods.iter().enumerate() {
            let b = r.as_ref().and_then(|(_, b)| b[k]);
            set.estimators.get_mut(m).expect("inserted above").push(b);
        }
    }
    set
}

/// Runs every `(p, repetition)` pair, in parallel over repetitions.
pub fn run_seprial_grid(cfg: &SeprialGridConfig, rmt: &RmtConfig) -> Result<SeprialTable> {
    cfg.validate()?;
    rmt.validate()?;
    let mut rows = Vec::new();
    let mut losses = BTreeMap::new();
    for (pi, &p) in cfg.p_values.iter().enumerate() {
        let results = par::map_range(cfg.reps, |rep| run_rep(cfg, rmt, pi, p, rep));
        let aligned: Vec<_> = results.iter().map(|r| r.aligned.clone()).collect();
        let aligned = collect(&cfg.estimators, &aligned);
        let rotated = cfg.rotated.then(|| {
            let rot: Vec<_> = results.iter().map(|r| r.rotated.clone()).collect();
            collect(&cfg.estimators, &rot)
        });
        for &m in &cfg.estimators {
            let score = aligned.score(m);
            let rscore = rotated.as_ref().and_then(|r| r.score(m));
            let failures = aligned.failures(m) + rotated.as_ref().map_or(0, |r| r.failures(m));
            rows.push(SeprialRow {
                p,
                n: cfg.n_for(p),
                estimator: m,
                reps: score.map_or(0, |s| s.reps),
                seprial: score.map_or(f64::NAN, |s| s.value),
                se: score.map_or(f64::NAN, |s| s.se),
                seprial_rotated: rscore.map_or(f64::NAN, |s| s.value),
                se_rotated: rscore.map_or(f64::NAN, |s| s.se),
                failures,
            });
        }
        losses.insert((p, false), aligned);
        if let Some(r) = rotated {
            losses.insert((p, true), r);
        }
    }
    Ok(SeprialTable { config: cfg.clone(), rows, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{estimate, EstimatorOptions};

    fn small() -> SeprialGridConfig {
        SeprialGridConfig {
            p_values: vec![10],
            reps: 4,
            seed: 3,
            estimators: Method::ALL.to_vec(),
            ..Default::default()
        }
    }

    #[test]
    fn shared_fits_match_the_dispatching_estimators() {
        let cfg = small();
        let model = cfg.model(10).unwrap();
        let population = model.covariance();
        let x = sample_gaussian(&model, 30, 11).unwrap();
        let rmt = RmtConfig::default();
        let (a, b) = rep_losses(&x, &population, &cfg.estimators, 10, 5, &rmt).unwrap();
        let opts = EstimatorOptions { folds: 10, seed: 5, population: Some(population.clone()), rmt };
        let basis = eigendecompose(&sample_covariance(&x).unwrap()).unwrap();
        let target = rebuild(&basis, &spectrum_oracle(&basis, &population).unwrap()).unwrap();
        for (m, loss) in cfg.estimators.iter().zip(&b) {
            let est = estimate(&x, *m, &opts).unwrap();
            let direct = ese(&est.matrix, &target).unwrap();
            assert!((loss.unwrap() - direct).abs() <= 1e-9 * (1.0 + direct), "{m}: {loss:?} vs {direct}");
        }
        assert_eq!(b[0], Some(a));
    }

    #[test]
    fn table_shape_and_identities() {
        let t = run_seprial_grid(&small(), &RmtConfig::default()).unwrap();
        assert_eq!(t.rows.len(), Method::ALL.len());
        let sample = t.row(10, Method::Sample).unwrap();
        assert_eq!((sample.seprial, sample.seprial_rotated), (0.0, 0.0));
        let oracle = t.row(10, Method::Oracle).unwrap();
        assert_eq!((oracle.seprial, oracle.seprial_rotated), (100.0, 100.0));
        let csv = t.to_csv();
        assert!(csv.starts_with(SeprialTable::HEADER));
        assert_eq!(csv.lines().count(), 1 + Method::ALL.len());
        let (gap, _) = t.gap(10, Method::Sample, Method::Oracle, false).unwrap();
        assert!((gap - 100.0).abs() < 1e-9);
    }

    #[test]
    fn thread_count_does_not_change_the_table() {
        let mut cfg = small();
        cfg.estimators = vec![Method::Sample, Method::Lw, Method::IsoKFoldCvc, Method::Oracle];
        let one = par::with_threads(Some(1), || run_seprial_grid(&cfg, &RmtConfig::default()).unwrap().to_csv());
        let many = par::with_threads(Some(4), || run_seprial_grid(&cfg, &RmtConfig::default()).unwrap().to_csv());
        assert_eq!(one, many);
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = small();
        cfg.p_values = vec![7];
        assert!(cfg.validate().unwrap_err().to_string().contains("p_values"));
        let mut cfg = small();
        cfg.spectrum_fractions = vec![0.5, 0.4, 0.4];
        assert!(cfg.validate().unwrap_err().to_string().contains("spectrum_fractions"));
    }
}
