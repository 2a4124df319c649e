//! Spectrum-correction covariance estimators.
//!
//! Every estimator keeps the eigenvectors of the sample covariance and
//! replaces its eigenvalues. [`estimate`] dispatches on a [`Method`]
//! identifier; the stable string forms are used by the CLI and config files.

mod cvc;
mod isotonic;
mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cvc::{
    buggy_loo_spectrum, cross_validate, kfold_folds, kfold_spectrum, loo_folds, loo_spectrum,
    CvRun, Projection,
};
pub use isotonic::isotonic_correct;
pub use oracle::{precision_oracle, rebuild, spectrum_oracle};

use crate::error::{Error, Result};
use crate::linalg::{eigendecompose, DataMatrix, EigenDecomposition, MeanMode, SymmetricMatrix};
use crate::rmt::{self, RmtConfig};

/// Stable estimator identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Sample,
    Lw,
    LooCvc,
    IsoLooCvc,
    KFoldCvc,
    IsoKFoldCvc,
    BuggyLooCvc,
    Oracle,
    PrecisionOracle,
    Nls,
    NlsPrecision,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Sample,
        Method::Lw,
        Method::LooCvc,
        Method::IsoLooCvc,
        Method::KFoldCvc,
        Method::IsoKFoldCvc,
        Method::BuggyLooCvc,
        Method::Oracle,
        Method::PrecisionOracle,
        Method::Nls,
        Method::NlsPrecision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sample => "sample",
            Method::Lw => "lw",
            Method::LooCvc => "loo-cvc",
            Method::IsoLooCvc => "iso-loo-cvc",
            Method::KFoldCvc => "10f-cvc",
            Method::IsoKFoldCvc => "iso-10f-cvc",
            Method::BuggyLooCvc => "buggy-loo-cvc",
            Method::Oracle => "oracle",
            Method::PrecisionOracle => "precision-oracle",
            Method::Nls => "nls",
            Method::NlsPrecision => "nls-precision",
        }
    }

    /// Oracles need the population covariance.
    pub fn needs_population(self) -> bool {
        matches!(self, Method::Oracle | Method::PrecisionOracle)
    }

    pub fn identifiers() -> String {
        Self::ALL.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`; valid: {}", Self::identifiers())))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.as_str().to_owned()
    }
}

/// Parameters that produced an estimate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateParams {
    pub lambda: Option<f64>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
}

/// A covariance estimate in the sample eigenbasis.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub matrix: SymmetricMatrix,
    /// Corrected variances paired with `basis` columns.
    pub corrected_spectrum: Vec<f64>,
    /// Eigendecomposition of the sample covariance.
    pub basis: EigenDecomposition,
    pub method: Method,
    pub params: EstimateParams,
}

impl CovarianceEstimate {
    pub(crate) fn from_spectrum(
        basis: EigenDecomposition,
        spectrum: Vec<f64>,
        method: Method,
        params: EstimateParams,
    ) -> Result<Self> {
        let matrix = rebuild(&basis, &spectrum)?;
        Ok(Self { matrix, corrected_spectrum: spectrum, basis, method, params })
    }
}

/// Linear shrinkage intensity and target scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkageEstimate {
    pub lambda: f64,
    /// `trace(S) / p`.
    pub target_scale: f64,
}

/// Rows after optional centering.
fn effective_rows(x: &DataMatrix) -> nalgebra::DMatrix<f64> {
    let v = x.values().clone();
    match x.mean_mode() {
        MeanMode::ZeroMean => v,
        MeanMode::Centered => {
            let mean = v.row_mean();
            let mut c = v;
            for mut row in c.row_iter_mut() {
                row -= &mean;
            }
            c
        }
    }
}

/// `n^-1 X^T X` (zero-mean) or the centered `(n-1)^-1` sample covariance.
pub fn sample_covariance(x: &DataMatrix) -> Result<SymmetricMatrix> {
    let n = x.rows();
    let divisor = match x.mean_mode() {
        MeanMode::ZeroMean => n as f64,
        MeanMode::Centered => {
            if n < 2 {
                return Err(Error::TooFewObservations { needed: 2, got: n });
            }
            (n - 1) as f64
        }
    };
    let r = effective_rows(x);
    SymmetricMatrix::symmetrize(r.tr_mul(&r) / divisor)
}

/// Ledoit-Wolf shrinkage towards `trace(S)/p * I`, with
/// `lambda = min(1, b^2 / d^2)`, `b^2 = n^-2 sum_t ||x_t x_t^T - S||_F^2` and
/// `d^2 = ||S - T||_F^2`. When `d^2 = 0` the sample covariance already equals
/// the target and `lambda = 1`.
pub fn lw_shrinkage(x: &DataMatrix) -> Result<(CovarianceEstimate, ShrinkageEstimate)> {
    let s = sample_covariance(x)?;
    let basis = eigendecompose(&s)?;
    let shrink = lw_intensity(x, &s)?;
    let spectrum = shrink_spectrum(&basis.eigenvalues, shrink.lambda);
    let params = EstimateParams { lambda: Some(shrink.lambda), ..Default::default() };
    Ok((CovarianceEstimate::from_spectrum(basis, spectrum, Method::Lw, params)?, shrink))
}

pub(crate) fn lw_intensity(x: &DataMatrix, s: &SymmetricMatrix) -> Result<ShrinkageEstimate> {
    let p = s.dim();
    let n = x.rows() as f64;
    let mu = s.trace() / p as f64;
    let sm = s.as_matrix();
    let s_norm_sq = sm.norm_squared();
    let d2 = s_norm_sq - 2.0 * mu * s.trace() + mu * mu * p as f64;
    let r = effective_rows(x);
    let rs = &r * sm;
    let mut b2 = 0.0;
    for t in 0..r.nrows() {
        let row = r.row(t);
        let xx = row.norm_squared();
        let xsx = row.dot(&rs.row(t));
        b2 += (xx * xx - 2.0 * xsx + s_norm_sq).max(0.0);
    }
    b2 /= n * n;
    let lambda = if d2 <= f64::EPSILON * s_norm_sq.max(f64::MIN_POSITIVE) {
        1.0
    } else {
        (b2 / d2).min(1.0)
    };
    Ok(ShrinkageEstimate { lambda, target_scale: mu })
}

/// `(1 - lambda) g_i + lambda * mean(g)`.
pub fn shrink_spectrum(spectrum: &[f64], lambda: f64) -> Vec<f64> {
    let mean = spectrum.iter().sum::<f64>() / spectrum.len() as f64;
    spectrum.iter().map(|g| (1.0 - lambda) * g + lambda * mean).collect()
}

fn sample_basis(x: &DataMatrix) -> Result<EigenDecomposition> {
    eigendecompose(&sample_covariance(x)?)
}

fn require_zero_mean(x: &DataMatrix, what: &str) -> Result<()> {
    if x.mean_mode() != MeanMode::ZeroMean {
        return Err(Error::InvalidInput(format!("{what} assumes zero-mean data")));
    }
    Ok(())
}

/// Leave-one-out cross-validated spectrum on the full-sample eigenbasis.
pub fn loo_cvc(x: &DataMatrix) -> Result<CovarianceEstimate> {
    require_zero_mean(x, "leave-one-out CVC")?;
    let spectrum = loo_spectrum(x)?;
    CovarianceEstimate::from_spectrum(sample_basis(x)?, spectrum, Method::LooCvc, EstimateParams::default())
}

/// K-fold cross-validated spectrum (seeded fold assignment).
pub fn kfold_cvc(x: &DataMatrix, k: usize, seed: u64) -> Result<CovarianceEstimate> {
    let spectrum = kfold_spectrum(x, k, seed)?;
    let params = EstimateParams { folds: Some(k), seed: Some(seed), ..Default::default() };
    CovarianceEstimate::from_spectrum(sample_basis(x)?, spectrum, Method::KFoldCvc, params)
}

/// Leave-one-out CVC with the transpose dropped from the projection.
pub fn buggy_loo_cvc(x: &DataMatrix) -> Result<CovarianceEstimate> {
    require_zero_mean(x, "buggy leave-one-out CVC")?;
    let spectrum = buggy_loo_spectrum(x)?;
    CovarianceEstimate::from_spectrum(
        sample_basis(x)?,
        spectrum,
        Method::BuggyLooCvc,
        EstimateParams::default(),
    )
}

/// Options shared by the dispatching entry points.
#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    /// Fold count for the K-fold methods.
    pub folds: usize,
    pub seed: u64,
    /// Required by the oracle methods.
    pub population: Option<SymmetricMatrix>,
    pub rmt: RmtConfig,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { folds: 10, seed: 0, population: None, rmt: RmtConfig::default() }
    }
}

/// Runs `method` on `x`.
pub fn estimate(x: &DataMatrix, method: Method, opts: &EstimatorOptions) -> Result<CovarianceEstimate> {
    let no_params = EstimateParams::default;
    match method {
        Method::Sample => {
            let basis = sample_basis(x)?;
            let spectrum = basis.eigenvalues.iter().map(|g| g.max(0.0)).collect();
            CovarianceEstimate::from_spectrum(basis, spectrum, method, no_params())
        }
        Method::Lw => lw_shrinkage(x).map(|(e, _)| e),
        Method::LooCvc => loo_cvc(x),
        Method::IsoLooCvc => {
            let mut est = loo_cvc(x)?;
            let iso = isotonic_correct(&est.corrected_spectrum);
            est = CovarianceEstimate::from_spectrum(est.basis, iso, method, est.params)?;
            Ok(est)
        }
        Method::KFoldCvc => kfold_cvc(x, opts.folds, opts.seed),
        Method::IsoKFoldCvc => {
            let est = kfold_cvc(x, opts.folds, opts.seed)?;
            let iso = isotonic_correct(&est.corrected_spectrum);
            CovarianceEstimate::from_spectrum(est.basis, iso, method, est.params)
        }
        Method::BuggyLooCvc => buggy_loo_cvc(x),
        Method::Oracle | Method::PrecisionOracle => {
            let population = opts.population.as_ref().ok_or_else(|| {
                Error::Config(format!("method `{method}` requires the population covariance"))
            })?;
            let basis = sample_basis(x)?;
            let spectrum = if method == Method::Oracle {
                spectrum_oracle(&basis, population)?
            } else {
                precision_oracle(&basis, population)?
            };
            CovarianceEstimate::from_spectrum(basis, spectrum, method, no_params())
        }
        Method::Nls => rmt::nls_estimator(x, false, &opts.rmt),
        Method::NlsPrecision => rmt::nls_estimator(x, true, &opts.rmt),
    }
}
