//! Fast named consistency checks, run by `speccov selftest`.
//!
//! The routines under test can be swapped through [`SelftestHooks`], which is
//! how the harness itself is tested against deliberately broken code.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::estimators::{
    cross_validate, estimate, isotonic_correct, kfold_folds, loo_folds, loo_spectrum, precision_oracle, rebuild,
    sample_covariance, spectrum_oracle, EstimatorOptions, Method, Projection,
};
use crate::io;
use crate::linalg::{eigendecompose, DataMatrix, MeanMode, SymmetricMatrix};
use crate::metrics::seprial;
use crate::rmt::{mp_fixed_point, mp_identity_closed_form, Concentration, RmtConfig, SpectralDistribution};
use crate::sampling::{derive_seed, random_rotation, sample_gaussian, SpectrumModel};
use crate::simulate::{make_lda_population, LdaCellConfig};

/// Replaceable implementations exercised by the checks.
#[derive(Clone, Copy)]
pub struct SelftestHooks {
    pub isotonic: fn(&[f64]) -> Vec<f64>,
}

impl Default for SelftestHooks {
    fn default() -> Self {
        Self { isotonic: isotonic_correct }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn failed(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{tag} {:<32} {}\n", c.name, c.detail));
        }
        let n_fail = self.failed().len();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), n_fail));
        out
    }
}

/// `Ok(detail)` passes, `Err` or `Ok` with a failed flag do not.
type Outcome = Result<(bool, String)>;

fn random_sequences() -> Vec<Vec<f64>> {
    let model = SpectrumModel::new(vec![1.0; 40]).expect("valid");
    (0..20u64)
        .map(|s| {
            let x = sample_gaussian(&model, 1, derive_seed(17, &[s])).expect("valid");
            x.values().row(0).iter().map(|v| v * 3.0 + 1.0).collect()
        })
        .collect()
}

fn isotonic_sum(h: &SelftestHooks) -> Outcome {
    let mut worst: f64 = 0.0;
    for v in random_sequences() {
        let out = (h.isotonic)(&v);
        let scale = v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        worst = worst.max((out.iter().sum::<f64>() - v.iter().sum::<f64>()).abs() / scale);
    }
    Ok((worst < 1e-12, format!("max relative sum change {worst:.1e}")))
}

fn isotonic_monotone(h: &SelftestHooks) -> Outcome {
    let ok = random_sequences().iter().all(|v| {
        let out = (h.isotonic)(v);
        out.len() == v.len() && out.windows(2).all(|w| w[0] >= w[1])
    });
    Ok((ok, "outputs non-increasing".into()))
}

fn isotonic_idempotent(h: &SelftestHooks) -> Outcome {
    let ok = random_sequences().iter().all(|v| {
        let once = (h.isotonic)(v);
        (h.isotonic)(&once) == once
    });
    Ok((ok, "f(f(x)) = f(x)".into()))
}

fn toy_sample() -> Outcome {
    let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]], MeanMode::ZeroMean)?;
    let est = estimate(&x, Method::Sample, &EstimatorOptions::default())?;
    let ok = est.matrix.as_matrix() == &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    Ok((ok, "[[1,0],[-1,0]] gives [[1,0],[0,0]]".into()))
}

struct Batch {
    samples: Vec<SymmetricMatrix>,
    oracles: Vec<SymmetricMatrix>,
    star: Vec<Vec<f64>>,
    diamond: Vec<Vec<f64>>,
}

fn batch() -> Result<Batch> {
    let model = SpectrumModel::block(15, &[0.2, 0.4, 0.4], &[1.0, 3.0, 10.0])?;
    let c = model.covariance();
    let mut b = Batch { samples: vec![], oracles: vec![], star: vec![], diamond: vec![] };
    for r in 0..6 {
        let s = sample_covariance(&sample_gaussian(&model, 45, derive_seed(5, &[r]))?)?;
        let basis = eigendecompose(&s)?;
        let star = spectrum_oracle(&basis, &c)?;
        b.oracles.push(rebuild(&basis, &star)?);
        b.diamond.push(precision_oracle(&basis, &c)?);
        b.star.push(star);
        b.samples.push(s);
    }
    Ok(b)
}

fn seprial_identities() -> Outcome {
    let b = batch()?;
    let s = seprial(&b.samples, &b.samples, &b.oracles)?.value;
    let o = seprial(&b.oracles, &b.samples, &b.oracles)?.value;
    Ok((s.abs() <= 1e-9 && (o - 100.0).abs() <= 1e-9, format!("sample {s}, oracle {o}")))
}

fn precision_below_spectrum() -> Outcome {
    let b = batch()?;
    let ok = b.star.iter().zip(&b.diamond).all(|(s, d)| s.iter().zip(d).all(|(s, d)| *d <= s * (1.0 + 1e-12)));
    Ok((ok, "precision oracle <= spectrum oracle at every rank".into()))
}

fn rotation_seprial() -> Outcome {
    let b = batch()?;
    let q = random_rotation(15, 99)?;
    let rot = |m: &SymmetricMatrix| SymmetricMatrix::symmetrize(&q * m.as_matrix() * q.transpose());
    let est: Vec<SymmetricMatrix> = b.samples.iter().map(|s| s.scaled(0.7)).collect();
    let plain = seprial(&est, &b.samples, &b.oracles)?.value;
    let rotated = seprial(
        &est.iter().map(rot).collect::<Result<Vec<_>>>()?,
        &b.samples.iter().map(rot).collect::<Result<Vec<_>>>()?,
        &b.oracles.iter().map(rot).collect::<Result<Vec<_>>>()?,
    )?
    .value;
    Ok(((plain - rotated).abs() < 1e-9, format!("{plain} vs {rotated}")))
}

fn rotation_cvc() -> Outcome {
    let model = SpectrumModel::block(10, &[0.2, 0.4, 0.4], &[1.0, 3.0, 10.0])?;
    let x = sample_gaussian(&model, 30, 8)?;
    let xr = x.rotated(&random_rotation(10, 4)?)?;
    let (a, b) = (loo_spectrum(&x)?, loo_spectrum(&xr)?);
    let err = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    Ok((err < 1e-8, format!("max difference {err:.1e}")))
}

fn loo_is_n_fold() -> Outcome {
    let model = SpectrumModel::block(5, &[0.2, 0.4, 0.4], &[1.0, 3.0, 10.0])?;
    let x = sample_gaussian(&model, 12, 3)?;
    let loo = cross_validate(&x, &loo_folds(12), Projection::Transposed, None)?.spectrum;
    let kf = cross_validate(&x, &kfold_folds(12, 12, 6)?, Projection::Transposed, None)?.spectrum;
    let err = loo.iter().zip(&kf).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    Ok((err <= 1e-12, format!("max difference {err:.1e}")))
}

fn mp_closed_form() -> Outcome {
    let cfg = RmtConfig::default();
    let h = SpectralDistribution::point_mass(1.0)?;
    let c = Concentration::new(3.0)?;
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let z = Complex64::new(0.05 + 0.08 * k as f64, 0.01 + 0.02 * (k % 7) as f64);
        let v = mp_fixed_point(&h, c, z, &cfg)?;
        worst = worst.max((v.m_f - mp_identity_closed_form(c.ratio(), z)).norm());
    }
    Ok((worst < 1e-8, format!("max error {worst:.1e} over 50 points")))
}

fn io_round_trip() -> Outcome {
    let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-300, 7.0, 1.0 / 3.0, f64::MAX, -0.0]);
    let mut csv = Vec::new();
    io::write_csv(&mut csv, &m)?;
    let mut bin = Vec::new();
    io::write_bin(&mut bin, &m)?;
    let ok = io::read_csv(csv.as_slice())? == m && io::read_bin(bin.as_slice())? == m;
    Ok((ok, "csv and binary reproduce every bit".into()))
}

fn bayes_calibration() -> Outcome {
    let mut worst: f64 = 0.0;
    for (alpha, beta) in [(0.0, 0.0), (2.0, 1.0), (1.0, -1.0)] {
        let pop = make_lda_population(&LdaCellConfig { p: 50, alpha, beta, target_bayes: 0.9 })?;
        worst = worst.max((pop.bayes_accuracy()? - 0.9).abs());
    }
    Ok((worst < 1e-10, format!("max calibration error {worst:.1e}")))
}

/// Runs every check with the given hooks.
pub fn run_with(hooks: &SelftestHooks) -> SelftestReport {
    type Check<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);
    let checks: Vec<Check> = vec![
        ("isotonic.sum_preserved", Box::new(|| isotonic_sum(hooks))),
        ("isotonic.non_increasing", Box::new(|| isotonic_monotone(hooks))),
        ("isotonic.idempotent", Box::new(|| isotonic_idempotent(hooks))),
        ("estimators.sample_toy", Box::new(toy_sample)),
        ("oracle.seprial_identities", Box::new(seprial_identities)),
        ("oracle.precision_below_spectrum", Box::new(precision_below_spectrum)),
        ("rotation.seprial_invariant", Box::new(rotation_seprial)),
        ("rotation.loo_cvc_invariant", Box::new(rotation_cvc)),
        ("cvc.loo_equals_n_fold", Box::new(loo_is_n_fold)),
        ("mp.closed_form", Box::new(mp_closed_form)),
        ("io.round_trip", Box::new(io_round_trip)),
        ("lda.bayes_calibration", Box::new(bayes_calibration)),
    ];
    let results: Vec<CheckResult> = checks
        .into_iter()
        .map(|(name, f)| {
            let t0 = Instant::now();
            let (passed, detail) = match f() {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult { name, passed, detail, seconds: t0.elapsed().as_secs_f64() }
        })
        .collect();
    SelftestReport { passed: results.iter().all(|c| c.passed), checks: results }
}

pub fn run() -> SelftestReport {
    run_with(&SelftestHooks::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes() {
        let r = run();
        assert!(r.passed, "{}", r.to_text());
    }

    #[test]
    fn broken_isotonic_is_named() {
        fn drops_last(v: &[f64]) -> Vec<f64> {
            let mut out = isotonic_correct(v);
            if let Some(last) = out.last_mut() {
                *last = 0.0;
            }
            out
        }
        let r = run_with(&SelftestHooks { isotonic: drops_last });
        assert!(!r.passed);
        assert!(r.failed().contains(&"isotonic.sum_preserved"));
    }
}
