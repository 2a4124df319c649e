//! Two-class linear discriminant analysis with a pluggable shared covariance.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{estimate, CovarianceEstimate, EstimatorOptions, Method};
use crate::linalg::{DataMatrix, MeanMode, SymmetricMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Class {
    A,
    B,
}

/// Which covariance the discriminant uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LdaCovariance {
    /// Identity: the nearest-centroid classifier.
    Centroid,
    /// The supplied population covariance.
    Population,
    Estimated(Method),
}

impl LdaCovariance {
    pub fn as_str(&self) -> &'static str {
        match self {
            LdaCovariance::Centroid => "centroid",
            LdaCovariance::Population => "population",
            LdaCovariance::Estimated(m) => m.as_str(),
        }
    }
}

impl fmt::Display for LdaCovariance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LdaCovariance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" => Ok(LdaCovariance::Centroid),
            "population" => Ok(LdaCovariance::Population),
            other => other.parse().map(LdaCovariance::Estimated).map_err(|_| {
                Error::Config(format!(
                    "unknown LDA covariance `{other}`; expected centroid, population, {}",
                    Method::identifiers()
                ))
            }),
        }
    }
}

impl serde::Serialize for LdaCovariance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> serde::Deserialize<'de> for LdaCovariance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone)]
pub struct LabeledData {
    pub features: DataMatrix,
    pub labels: Vec<Class>,
}

impl LabeledData {
    pub fn new(features: DataMatrix, labels: Vec<Class>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch { expected: features.rows(), got: labels.len() });
        }
        Ok(Self { features, labels })
    }

    /// Stacks class-A rows above class-B rows.
    pub fn from_classes(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch { expected: a.ncols(), got: b.ncols() });
        }
        let (na, nb) = (a.nrows(), b.nrows());
        let values = DMatrix::from_fn(na + nb, a.ncols(), |r, c| if r < na { a[(r, c)] } else { b[(r - na, c)] });
        let mut labels = vec![Class::A; na];
        labels.extend(std::iter::repeat_n(Class::B, nb));
        Self::new(DataMatrix::new(values, MeanMode::ZeroMean)?, labels)
    }

    fn class_rows(&self, class: Class) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == class).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: Class,
    /// Posterior probability of class B.
    pub probability_b: f64,
}

#[derive(Debug, Clone)]
pub struct LdaModel {
    pub mean_a: DVector<f64>,
    pub mean_b: DVector<f64>,
    /// Present when the covariance came from an estimator.
    pub covariance: Option<CovarianceEstimate>,
    pub kind: LdaCovariance,
    /// Class-A prior.
    pub prior: f64,
    /// `C^-1 (mu_B - mu_A)`.
    weights: DVector<f64>,
    offset: f64,
}

fn class_mean(x: &DMatrix<f64>, rows: &[usize]) -> DVector<f64> {
    let mut m = DVector::zeros(x.ncols());
    for &r in rows {
        m += x.row(r).transpose();
    }
    m / rows.len() as f64
}

/// `V diag(1/g) V^T d` for a spectrum-corrected estimate.
fn solve_with_estimate(est: &CovarianceEstimate, d: &DVector<f64>) -> Result<DVector<f64>> {
    let spec = &est.corrected_spectrum;
    let max = spec.iter().cloned().fold(0.0, f64::max);
    if let Some((i, &g)) = spec.iter().enumerate().find(|(_, &g)| !(g > 1e-12 * max)) {
        return Err(Error::Singular(format!("corrected eigenvalue {i} is {g:e} (max {max:e})")));
    }
    let v = &est.basis.eigenvectors;
    let mut coef = v.tr_mul(d);
    for (c, g) in coef.iter_mut().zip(spec) {
        *c /= g;
    }
    Ok(v * coef)
}

/// Fits class means and a shared covariance. Estimated covariances see the
/// pooled class-centred residuals as zero-mean data.
pub fn fit_lda(data: &LabeledData, kind: LdaCovariance, opts: &EstimatorOptions) -> Result<LdaModel> {
    let rows_a = data.class_rows(Class::A);
    let rows_b = data.class_rows(Class::B);
    if rows_a.is_empty() || rows_b.is_empty() {
        return Err(Error::InvalidInput("both classes need at least one observation".into()));
    }
    let x = data.features.values();
    let mean_a = class_mean(x, &rows_a);
    let mean_b = class_mean(x, &rows_b);
    let d = &mean_b - &mean_a;
    let (weights, covariance) = match kind {
        LdaCovariance::Centroid => (d.clone(), None),
        LdaCovariance::Population => {
            let pop = opts
                .population
                .as_ref()
                .ok_or_else(|| Error::Config("`population` LDA requires the population covariance".into()))?;
            if pop.dim() != d.len() {
                return Err(Error::DimensionMismatch { expected: d.len(), got: pop.dim() });
            }
            (pop.inverse()?.as_matrix() * &d, None)
        }
        LdaCovariance::Estimated(method) => {
            let mut resid = x.clone();
            for (t, label) in data.labels.iter().enumerate() {
                let mu = if *label == Class::A { &mean_a } else { &mean_b };
                let mut row = resid.row_mut(t);
                row -= mu.transpose();
            }
            let est = estimate(&DataMatrix::new(resid, MeanMode::ZeroMean)?, method, opts)?;
            (solve_with_estimate(&est, &d)?, Some(est))
        }
    };
    let prior: f64 = 0.5;
    let offset = 0.5 * weights.dot(&(&mean_a + &mean_b)) - ((1.0 - prior) / prior).ln();
    Ok(LdaModel { mean_a, mean_b, covariance, kind, prior, weights, offset })
}

impl LdaModel {
    /// `(mu_B - mu_A)^T C^-1 x - 1/2 (mu_B - mu_A)^T C^-1 (mu_B + mu_A) + log((1-prior)/prior)`.
    pub fn discriminant(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), got: x.len() });
        }
        Ok(self.weights.dot(x) - self.offset)
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<Prediction> {
        let delta = self.discriminant(x)?;
        let class = if delta > 0.0 { Class::B } else { Class::A };
        Ok(Prediction { class, probability_b: 1.0 / (1.0 + (-delta).exp()) })
    }

    /// Discriminant values for every row of `x`.
    pub fn scores(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), got: x.ncols() });
        }
        Ok((x * &self.weights).add_scalar(-self.offset))
    }

    /// Expected accuracy on balanced Gaussian classes `N(mean_a, C)` and
    /// `N(mean_b, C)`.
    pub fn population_accuracy(&self, mean_a: &DVector<f64>, mean_b: &DVector<f64>, population: &SymmetricMatrix) -> Result<f64> {
        let sd = (self.weights.dot(&(population.as_matrix() * &self.weights))).sqrt();
        let normal = Normal::standard();
        if !(sd > 0.0) {
            return Ok(0.5);
        }
        let pa = normal.cdf((self.offset - self.weights.dot(mean_a)) / sd);
        let pb = normal.cdf((self.weights.dot(mean_b) - self.offset) / sd);
        Ok(0.5 * (pa + pb))
    }
}

/// Fraction of rows classified correctly.
pub fn accuracy(model: &LdaModel, test: &LabeledData) -> Result<f64> {
    if test.labels.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let s = model.scores(test.features.values())?;
    let correct = s
        .iter()
        .zip(&test.labels)
        .filter(|(d, l)| (**d > 0.0) == (**l == Class::B))
        .count();
    Ok(correct as f64 / test.labels.len() as f64)
}

/// `Phi(Delta / 2)` with `Delta` the Mahalanobis distance between the means.
pub fn bayes_accuracy(mean_a: &DVector<f64>, mean_b: &DVector<f64>, population: &SymmetricMatrix) -> Result<f64> {
    if mean_a.len() != population.dim() || mean_b.len() != population.dim() {
        return Err(Error::DimensionMismatch { expected: population.dim(), got: mean_a.len().min(mean_b.len()) });
    }
    let d = mean_b - mean_a;
    let delta2 = d.dot(&(population.inverse()?.as_matrix() * &d));
    Ok(Normal::standard().cdf(0.5 * delta2.max(0.0).sqrt()))
}
