//! Forward map from a population spectrum to predicted sample eigenvalues.
//!
//! The limiting sample density is `pi^-1 Im m_F(x + i eta)`, evaluated on a
//! grid covering `t (1 -+ sqrt(p/n))^2` around every population atom `t`,
//! integrated by trapezoid into a cdf and inverted at `(i - 1/2) / p`.

use num_complex::Complex64;

use super::stieltjes::MpEquation;
use super::{Concentration, RmtConfig, SpectralDistribution};
use crate::error::Result;

/// `m_F(x + i * imag_offset)` along `xs`, each solve warm-started from the
/// previous point and falling back to the homotopy when Newton lands on an
/// inadmissible root. Ascending `xs` gives the cheapest continuation.
pub(crate) fn transform_on_line(
    h: &SpectralDistribution,
    c: Concentration,
    xs: &[f64],
    cfg: &RmtConfig,
) -> Result<Vec<Complex64>> {
    let eq = MpEquation::new(h, c);
    let mut prev: Option<Complex64> = None;
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        let z = Complex64::new(x, cfg.imag_offset);
        let m = match prev.and_then(|m0| eq.newton_admissible(z, m0, cfg.fp_tol)) {
            Some((m, _)) => m,
            None => eq.homotopy(z, cfg)?.m_f,
        };
        prev = Some(m);
        out.push(m);
    }
    Ok(out)
}

/// `pi^-1 Im m_F(x + i * imag_offset)` at each `x`.
pub fn spectral_density(
    h: &SpectralDistribution,
    c: Concentration,
    xs: &[f64],
    cfg: &RmtConfig,
) -> Result<Vec<f64>> {
    Ok(transform_on_line(h, c, xs, cfg)?.into_iter().map(|m| m.im.max(0.0) / std::f64::consts::PI).collect())
}

/// Evaluation grid: log-spaced points over the merged support envelopes of
/// the atoms.
fn density_grid(h: &SpectralDistribution, y: f64, points: usize) -> Vec<f64> {
    let sy = y.sqrt();
    let lo_factor = if y < 1.0 { (1.0 - sy).powi(2) } else { 1e-6 };
    let hi_factor = (1.0 + sy).powi(2);
    let mut intervals: Vec<(f64, f64)> = h
        .locations()
        .iter()
        .map(|&t| {
            let (a, b) = ((t * lo_factor).ln(), (t * hi_factor).ln());
            let pad = 0.05 * (b - a) + 1e-3;
            (a - pad, b + pad)
        })
        .collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in intervals {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    let total: f64 = merged.iter().map(|(a, b)| b - a).sum();
    let mut grid = Vec::with_capacity(points + 64 * merged.len());
    for (a, b) in merged {
        let k = ((points as f64 * (b - a) / total).round() as usize).max(64);
        for i in 0..k {
            grid.push((a + (b - a) * i as f64 / (k - 1) as f64).exp());
        }
    }
    grid
}

/// Predicted sample eigenvalues (descending) for population spectrum `h` at
/// concentration `c`: the `p` quantiles of the limiting sample distribution
/// at probabilities `(i - 1/2) / p`.
pub fn predict_sample_spectrum(
    h: &SpectralDistribution,
    c: Concentration,
    p: usize,
    cfg: &RmtConfig,
) -> Result<Vec<f64>> {
    let y = c.ratio();
    // When p > n a fraction 1 - n/p of the sample eigenvalues is exactly zero.
    let zero_mass = (1.0 - c.value()).max(0.0);
    let grid = density_grid(h, y, cfg.density_points);
    let dens = spectral_density(h, c, &grid, cfg)?;
    let mut cdf = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    for j in 1..grid.len() {
        acc += 0.5 * (dens[j] + dens[j - 1]) * (grid[j] - grid[j - 1]);
        cdf.push(acc);
    }
    let total = acc.max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(p);
    for i in 0..p {
        let q = (i as f64 + 0.5) / p as f64;
        if q <= zero_mass {
            out.push(0.0);
            continue;
        }
        let target = (q - zero_mass) / (1.0 - zero_mass) * total;
        let j = cdf.partition_point(|&v| v < target).clamp(1, grid.len() - 1);
        let (c0, c1) = (cdf[j - 1], cdf[j]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.5 };
        out.push(grid[j - 1] + frac * (grid[j] - grid[j - 1]));
    }
    out.reverse();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::sample_covariance;
    use crate::linalg::eigendecompose;
    use crate::sampling::{sample_gaussian, SpectrumModel};

    fn cfg() -> RmtConfig {
        RmtConfig::default()
    }

    #[test]
    fn identity_population_edges() {
        let h = SpectralDistribution::point_mass(1.0).unwrap();
        let c = Concentration::new(3.0).unwrap();
        let q = predict_sample_spectrum(&h, c, 2000, &cfg()).unwrap();
        let y: f64 = 1.0 / 3.0;
        let (lo, hi) = ((1.0 - y.sqrt()).powi(2), (1.0 + y.sqrt()).powi(2));
        assert!((q[0] - hi).abs() / hi < 0.02, "{} vs {hi}", q[0]);
        assert!((q[1999] - lo).abs() / lo < 0.02, "{} vs {lo}", q[1999]);
    }

    #[test]
    fn density_integrates_to_one() {
        let h = SpectralDistribution::new(vec![1.0, 3.0, 10.0], vec![0.2, 0.4, 0.4]).unwrap();
        let c = Concentration::new(3.0).unwrap();
        let grid = density_grid(&h, 1.0 / 3.0, 4000);
        let d = spectral_density(&h, c, &grid, &cfg()).unwrap();
        let mass: f64 = (1..grid.len()).map(|j| 0.5 * (d[j] + d[j - 1]) * (grid[j] - grid[j - 1])).sum();
        assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
    }

    #[test]
    fn large_concentration_recovers_population_quantiles() {
        let h = SpectralDistribution::new(vec![1.0, 3.0, 10.0], vec![0.2, 0.4, 0.4]).unwrap();
        let q = predict_sample_spectrum(&h, Concentration::new(1e5).unwrap(), 50, &cfg()).unwrap();
        let pop = h.quantiles(50);
        for (a, b) in q.iter().zip(&pop) {
            assert!((a - b).abs() / b < 0.03, "{a} vs {b}");
        }
    }

    #[test]
    fn first_moment_is_preserved() {
        let h = SpectralDistribution::new(vec![1.0, 3.0, 10.0], vec![0.2, 0.4, 0.4]).unwrap();
        let q = predict_sample_spectrum(&h, Concentration::new(3.0).unwrap(), 400, &cfg()).unwrap();
        let mean = q.iter().sum::<f64>() / 400.0;
        assert!((mean - h.mean()).abs() / h.mean() < 0.01, "{mean} vs {}", h.mean());
    }

    #[test]
    fn scaling_population_scales_prediction() {
        let h = SpectralDistribution::new(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let c = Concentration::new(4.0).unwrap();
        let a = predict_sample_spectrum(&h, c, 30, &cfg()).unwrap();
        let b = predict_sample_spectrum(&h.scaled(2.5).unwrap(), c, 30, &cfg()).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((2.5 * u - v).abs() < 1e-6 * v, "{u} {v}");
        }
    }

    #[test]
    fn matches_simulated_sample_spectrum() {
        let (p, n) = (100, 300);
        let model = SpectrumModel::new(vec![1.0; p]).unwrap();
        let reps = 10;
        let mut mean = vec![0.0; p];
        for r in 0..reps {
            let x = sample_gaussian(&model, n, r).unwrap();
            let e = eigendecompose(&sample_covariance(&x).unwrap()).unwrap();
            for (m, g) in mean.iter_mut().zip(&e.eigenvalues) {
                *m += g / reps as f64;
            }
        }
        let h = SpectralDistribution::point_mass(1.0).unwrap();
        let q = predict_sample_spectrum(&h, Concentration::from_shape(n, p).unwrap(), p, &cfg()).unwrap();
        let mare = q.iter().zip(&mean).map(|(a, b)| (a - b).abs() / b).sum::<f64>() / p as f64;
        assert!(mare < 0.05, "mean abs rel error {mare}");
    }
}
