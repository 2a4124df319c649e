//! Random-matrix machinery: Stieltjes transforms, the Marchenko-Pastur
//! fixed point, forward prediction of sample spectra, El Karoui's inversion
//! and nonlinear shrinkage.

mod inversion;
mod nls;
mod quantiles;
mod stieltjes;

use serde::{Deserialize, Serialize};

pub use inversion::{default_grid, default_probes, elkaroui_invert, kernel_stieltjes, simplex_least_squares, Inversion};
pub use nls::{
    estimate_population_spectrum, fit_nls, nls_correct, nls_estimator, nls_precision_correct, NlsFit,
    PopulationFit,
};
pub use quantiles::{predict_sample_spectrum, spectral_density};
pub use stieltjes::{mp_fixed_point, mp_identity_closed_form, mp_real_line, stieltjes_discrete, StieltjesValue};

use crate::error::{Error, Result};

/// Numerical settings for the RMT routines. Field names double as the
/// `rmt.*` config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmtConfig {
    /// Imaginary offset used for real-line limits of Stieltjes transforms.
    pub imag_offset: f64,
    pub fp_max_iter: usize,
    pub fp_tol: f64,
    /// Number of atoms `t_k` in the El Karoui grid.
    pub grid_size: usize,
    /// Number of complex probes `z_j` in the El Karoui inversion.
    pub probe_count: usize,
    /// Number of local-search starts for population-spectrum estimation (1..=3).
    pub starts: usize,
    /// Points on which the predicted sample density is evaluated.
    pub density_points: usize,
    /// Iteration cap for each local search.
    pub search_iter: usize,
}

impl Default for RmtConfig {
    fn default() -> Self {
        Self {
            imag_offset: 1e-6,
            fp_max_iter: 10_000,
            fp_tol: 1e-10,
            grid_size: 50,
            probe_count: 20,
            starts: 3,
            density_points: 1200,
            search_iter: 80,
        }
    }
}

impl RmtConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, why: &str| Err(Error::Config(format!("rmt.{f}: {why}")));
        if !(self.imag_offset > 0.0) {
            return bad("imag_offset", "must be > 0");
        }
        if self.fp_max_iter == 0 {
            return bad("fp_max_iter", "must be >= 1");
        }
        if !(self.fp_tol > 0.0) {
            return bad("fp_tol", "must be > 0");
        }
        if self.grid_size == 0 {
            return bad("grid_size", "must be >= 1");
        }
        if self.probe_count == 0 {
            return bad("probe_count", "must be >= 1");
        }
        if !(1..=3).contains(&self.starts) {
            return bad("starts", "must be in 1..=3");
        }
        if self.density_points < 16 {
            return bad("density_points", "must be >= 16");
        }
        Ok(())
    }
}

/// Ratio `c = n / p` of observations to dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concentration(f64);

impl Concentration {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidInput(format!("concentration must be finite and > 0, got {c}")));
        }
        Ok(Self(c))
    }

    pub fn from_shape(n: usize, p: usize) -> Result<Self> {
        Self::new(n as f64 / p as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `p / n`.
    pub fn ratio(self) -> f64 {
        1.0 / self.0
    }
}

/// Discrete distribution: weights on positive locations.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDistribution {
    locations: Vec<f64>,
    weights: Vec<f64>,
}

impl SpectralDistribution {
    pub fn new(locations: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if locations.is_empty() || locations.len() != weights.len() {
            return Err(Error::InvalidInput("locations and weights must be non-empty and equal length".into()));
        }
        if locations.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidInput("locations must be finite and > 0".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { locations, weights })
    }

    /// Equal-weight atoms at `values`, with identical values merged.
    pub fn from_eigenvalues(values: &[f64]) -> Result<Self> {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let w = 1.0 / values.len().max(1) as f64;
        let mut locations: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for v in sorted {
            match locations.last() {
                Some(&l) if l == v => *weights.last_mut().unwrap() += w,
                _ => {
                    locations.push(v);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        for x in &mut weights {
            *x /= total;
        }
        Self::new(locations, weights)
    }

    pub fn point_mass(t: f64) -> Result<Self> {
        Self::new(vec![t], vec![1.0])
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.locations.iter().zip(&self.weights).map(|(t, w)| t * w).sum()
    }

    /// The `p` quantiles at probabilities `(i - 1/2) / p`, descending.
    pub fn quantiles(&self, p: usize) -> Vec<f64> {
        let mut order: Vec<usize> = (0..self.locations.len()).collect();
        order.sort_by(|&a, &b| self.locations[a].total_cmp(&self.locations[b]));
        let mut out = Vec::with_capacity(p);
        let mut k = 0;
        let mut cum = self.weights[order[0]];
        for i in 0..p {
            let q = (i as f64 + 0.5) / p as f64;
            while cum < q && k + 1 < order.len() {
                k += 1;
                cum += self.weights[order[k]];
            }
            out.push(self.locations[order[k]]);
        }
        out.reverse();
        out
    }

    /// Locations scaled by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.locations.iter().map(|t| t * s).collect(), self.weights.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_validation() {
        assert!(SpectralDistribution::new(vec![1.0], vec![0.5]).is_err());
        assert!(SpectralDistribution::new(vec![-1.0], vec![1.0]).is_err());
        assert!(SpectralDistribution::new(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
        assert!(SpectralDistribution::new(vec![1.0, 2.0], vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn merges_duplicates_and_quantiles() {
        let d = SpectralDistribution::from_eigenvalues(&[3.0, 1.0, 3.0, 10.0]).unwrap();
        assert_eq!(d.locations(), &[1.0, 3.0, 10.0]);
        assert_eq!(d.weights(), &[0.25, 0.5, 0.25]);
        assert_eq!(d.quantiles(4), vec![10.0, 3.0, 3.0, 1.0]);
        assert!((d.mean() - 4.25).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(RmtConfig::default().validate().is_ok());
        let bad = RmtConfig { starts: 4, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RmtConfig { imag_offset: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
