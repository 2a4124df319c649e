//! Stieltjes transforms and the Marchenko-Pastur fixed point
//!
//! `m_F(z) = sum_k w_k / (t_k (1 - y - y z m_F) - z)` with `y = p / n`, and
//! the companion transform of the `n x n` kernel spectrum
//! `m_G(z) = -(1 - y) / z + y m_F(z)`.

use num_complex::Complex64;

use super::{Concentration, RmtConfig, SpectralDistribution};
use crate::error::{Error, Result};

/// `sum_k w_k / (t_k - z)`.
pub fn stieltjes_discrete(dist: &SpectralDistribution, z: Complex64) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (&t, &w) in dist.locations().iter().zip(dist.weights()) {
        let d = Complex64::new(t, 0.0) - z;
        if d.norm() == 0.0 {
            return Err(Error::InvalidInput(format!("z = {z} coincides with atom at {t}")));
        }
        acc += w / d;
    }
    Ok(acc)
}

/// A solved point of the Marchenko-Pastur equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesValue {
    pub z: Complex64,
    /// Transform of the limiting sample-eigenvalue distribution.
    pub m_f: Complex64,
    /// Companion transform of the kernel (`n x n`) spectrum.
    pub m_g: Complex64,
    pub iterations: usize,
    /// `|m_f - T(m_f)|` at the returned value.
    pub residual: f64,
}

pub(crate) struct MpEquation<'a> {
    loc: &'a [f64],
    w: &'a [f64],
    y: f64,
}

impl<'a> MpEquation<'a> {
    pub(crate) fn new(h: &'a SpectralDistribution, c: Concentration) -> Self {
        Self { loc: h.locations(), w: h.weights(), y: c.ratio() }
    }

    fn map(&self, z: Complex64, m: Complex64) -> Complex64 {
        let a = 1.0 - self.y - self.y * z * m;
        self.loc.iter().zip(self.w).map(|(&t, &w)| w / (t * a - z)).sum()
    }

    /// Residual `m - T(m)` and its derivative in `m`.
    fn residual(&self, z: Complex64, m: Complex64) -> (Complex64, Complex64) {
        let a = 1.0 - self.y - self.y * z * m;
        let mut tm = Complex64::new(0.0, 0.0);
        let mut dtm = Complex64::new(0.0, 0.0);
        for (&t, &w) in self.loc.iter().zip(self.w) {
            let inv = 1.0 / (t * a - z);
            tm += w * inv;
            dtm += w * t * self.y * z * inv * inv;
        }
        (m - tm, 1.0 - dtm)
    }

    pub(crate) fn companion(&self, z: Complex64, m_f: Complex64) -> Complex64 {
        -(1.0 - self.y) / z + self.y * m_f
    }

    /// Both transforms must lie in the closed upper half-plane.
    fn admissible(&self, z: Complex64, m: Complex64) -> bool {
        let g = self.companion(z, m);
        let tol = 1e-9 * (1.0 + m.norm());
        m.is_finite() && m.im >= -tol && g.im >= -tol
    }

    fn value(&self, z: Complex64, m: Complex64, iterations: usize) -> StieltjesValue {
        let residual = self.residual(z, m).0.norm();
        StieltjesValue { z, m_f: m, m_g: self.companion(z, m), iterations, residual }
    }

    /// Damped fixed-point iteration from `m0`; the step is halved whenever the
    /// residual grows.
    fn fixed_point(&self, z: Complex64, m0: Complex64, cfg: &RmtConfig) -> std::result::Result<(Complex64, usize), (Complex64, f64)> {
        let mut m = m0;
        let mut theta: f64 = 1.0;
        let mut prev = f64::INFINITY;
        for it in 1..=cfg.fp_max_iter {
            let tm = self.map(z, m);
            let res = (tm - m).norm();
            if !res.is_finite() {
                return Err((m, res));
            }
            if res < cfg.fp_tol {
                return Ok((m, it));
            }
            if res > prev {
                theta = (theta * 0.5).max(1e-3);
            }
            prev = res;
            m += theta * (tm - m);
        }
        Err((m, prev))
    }

    pub(crate) fn newton(&self, z: Complex64, m0: Complex64, tol: f64) -> Option<(Complex64, usize)> {
        let mut m = m0;
        for it in 1..=60 {
            let (r, dr) = self.residual(z, m);
            if r.norm() < tol * (1.0 + m.norm()) {
                return self.admissible(z, m).then_some((m, it));
            }
            let step = r / dr;
            if !step.is_finite() {
                return None;
            }
            m -= step;
        }
        None
    }

    /// Newton solve at `z` from `m0`, retrying from the conjugate when the
    /// iteration lands on the mirror root.
    pub(crate) fn newton_admissible(&self, z: Complex64, m0: Complex64, tol: f64) -> Option<(Complex64, usize)> {
        self.newton(z, m0, tol).or_else(|| {
            let cand = Complex64::new(m0.re, m0.im.abs().max(1e-8));
            self.newton(z, cand, tol)
        })
    }

    /// Continuation in `Im z`: solve far from the real axis by fixed point,
    /// then walk down to `z` with Newton steps.
    pub(crate) fn homotopy(&self, z: Complex64, cfg: &RmtConfig) -> Result<StieltjesValue> {
        let scale = self.loc.iter().cloned().fold(0.0, f64::max).max(z.re.abs()).max(1.0);
        let top = scale.max(z.im);
        let z_top = Complex64::new(z.re, top);
        let (mut m, mut iters) = self
            .fixed_point(z_top, -1.0 / z_top, cfg)
            .map_err(|(last, residual)| Error::FixedPoint { z: z_top, iterations: cfg.fp_max_iter, last, residual })?;
        let mut cur = top;
        let mut ratio: f64 = 0.25;
        while cur > z.im {
            let next = (cur * ratio).max(z.im);
            let zn = Complex64::new(z.re, next);
            match self.newton_admissible(zn, m, cfg.fp_tol) {
                Some((mn, it)) => {
                    m = mn;
                    iters += it;
                    cur = next;
                    ratio = (ratio * ratio).max(1e-3);
                }
                None => {
                    ratio = ratio.sqrt();
                    if ratio > 0.999 {
                        let residual = self.residual(zn, m).0.norm();
                        return Err(Error::FixedPoint { z, iterations: iters, last: m, residual });
                    }
                }
            }
        }
        Ok(self.value(z, m, iters))
    }
}

/// Solves the Marchenko-Pastur equation at `z` (`Im z > 0`) by damped
/// fixed-point iteration from `-1/z`. If the iteration has not met
/// `fp_tol` within `fp_max_iter` steps, the solution is continued down from
/// a point further from the real axis with Newton steps.
pub fn mp_fixed_point(
    h: &SpectralDistribution,
    c: Concentration,
    z: Complex64,
    cfg: &RmtConfig,
) -> Result<StieltjesValue> {
    if !(z.im > 0.0) {
        return Err(Error::InvalidInput(format!("need Im z > 0, got {z}")));
    }
    let eq = MpEquation::new(h, c);
    match eq.fixed_point(z, -1.0 / z, cfg) {
        Ok((m, it)) if eq.admissible(z, m) => Ok(eq.value(z, m, it)),
        _ => eq.homotopy(z, cfg),
    }
}

/// `m_F(x + i * imag_offset)`: the real-line limit used by the shrinkage
/// formulas and the density inversion.
pub fn mp_real_line(h: &SpectralDistribution, c: Concentration, x: f64, cfg: &RmtConfig) -> Result<StieltjesValue> {
    MpEquation::new(h, c).homotopy(Complex64::new(x, cfg.imag_offset), cfg)
}

/// Marchenko-Pastur transform for an identity population at ratio
/// `y = p / n`: the root of `y z m^2 - (1 - y - z) m + 1 = 0` with `Im m > 0`.
pub fn mp_identity_closed_form(y: f64, z: Complex64) -> Complex64 {
    let b = 1.0 - y - z;
    let disc = (b * b - 4.0 * y * z).sqrt();
    let r1 = (b + disc) / (2.0 * y * z);
    let r2 = (b - disc) / (2.0 * y * z);
    if r1.im > 0.0 {
        r1
    } else {
        r2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom_transform() {
        let d = SpectralDistribution::point_mass(1.0).unwrap();
        let m = stieltjes_discrete(&d, Complex64::new(0.0, 1.0)).unwrap();
        assert!((m - Complex64::new(0.5, 0.5)).norm() < 1e-15);
        assert!(stieltjes_discrete(&d, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn symmetric_atoms_give_imaginary_value() {
        // Locations must be positive, so shift: atoms at 1 +- a, probe at 1 + iy.
        let d = SpectralDistribution::new(vec![0.5, 1.5], vec![0.5, 0.5]).unwrap();
        let m = stieltjes_discrete(&d, Complex64::new(1.0, 0.7)).unwrap();
        assert!(m.re.abs() < 1e-15 && m.im > 0.0);
    }

    #[test]
    fn three_atom_direct_sum() {
        let d = SpectralDistribution::new(vec![1.0, 3.0, 10.0], vec![0.2, 0.4, 0.4]).unwrap();
        let z = Complex64::new(2.5, 0.3);
        let direct = 0.2 / (1.0 - z) + 0.4 / (3.0 - z) + 0.4 / (10.0 - z);
        assert!((stieltjes_discrete(&d, z).unwrap() - direct).norm() < 1e-15);
    }

    #[test]
    fn identity_population_matches_closed_form() {
        let cfg = RmtConfig::default();
        let h = SpectralDistribution::point_mass(1.0).unwrap();
        for &c in &[1.5, 3.0, 10.0] {
            let conc = Concentration::new(c).unwrap();
            for &(x, y) in &[(0.5, 0.5), (1.0, 0.05), (2.0, 0.01), (3.5, 1.0), (0.1, 0.2)] {
                let z = Complex64::new(x, y);
                let v = mp_fixed_point(&h, conc, z, &cfg).unwrap();
                let exact = mp_identity_closed_form(1.0 / c, z);
                assert!((v.m_f - exact).norm() < 1e-8, "c={c} z={z}: {} vs {exact}", v.m_f);
                assert!(v.residual < 1e-9);
                assert!(v.m_f.im > 0.0 && v.m_g.im > 0.0);
            }
        }
    }

    #[test]
    fn real_line_limit_matches_closed_form_inside_support() {
        let cfg = RmtConfig::default();
        let h = SpectralDistribution::point_mass(1.0).unwrap();
        let c = Concentration::new(3.0).unwrap();
        for &x in &[0.3, 0.8, 1.2, 2.0, 2.3, 3.0] {
            let v = mp_real_line(&h, c, x, &cfg).unwrap();
            let exact = mp_identity_closed_form(1.0 / 3.0, Complex64::new(x, cfg.imag_offset));
            assert!((v.m_f - exact).norm() < 1e-6, "x={x}: {} vs {exact}", v.m_f);
        }
    }

    #[test]
    fn huge_concentration_reduces_to_population_transform() {
        let cfg = RmtConfig::default();
        let h = SpectralDistribution::new(vec![1.0, 4.0], vec![0.3, 0.7]).unwrap();
        let z = Complex64::new(2.0, 0.5);
        let v = mp_fixed_point(&h, Concentration::new(1e6).unwrap(), z, &cfg).unwrap();
        let direct = stieltjes_discrete(&h, z).unwrap();
        assert!((v.m_f - direct).norm() < 1e-4);
    }

    #[test]
    fn rejects_real_argument() {
        let h = SpectralDistribution::point_mass(1.0).unwrap();
        let c = Concentration::new(2.0).unwrap();
        assert!(mp_fixed_point(&h, c, Complex64::new(1.0, 0.0), &RmtConfig::default()).is_err());
    }

    #[test]
    fn herglotz_on_mixture() {
        let cfg = RmtConfig::default();
        let h = SpectralDistribution::new(vec![1.0, 3.0, 10.0], vec![0.2, 0.4, 0.4]).unwrap();
        let c = Concentration::new(3.0).unwrap();
        for i in 0..40 {
            let z = Complex64::new(0.1 + i as f64 * 0.7, 10f64.powf(-3.0 + (i % 7) as f64 * 0.5));
            let v = mp_fixed_point(&h, c, z, &cfg).unwrap();
            assert!(v.m_f.im > 0.0 && v.residual < 1e-9, "z={z}: {v:?}");
        }
    }
}
