//! El Karoui's inversion: fit grid weights `w_k` so that the kernel-spectrum
//! Stieltjes transform satisfies the Marchenko-Pastur relation at a handful
//! of complex probes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{Concentration, SpectralDistribution};
use crate::error::{Error, Result};

/// Result of an inversion: the fitted mixture and the residual sum of
/// squares it attains.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub distribution: SpectralDistribution,
    pub weights: Vec<f64>,
    pub objective: f64,
}

/// Stieltjes transform of the `n`-point kernel spectrum: the sample
/// eigenvalues padded with `n - p` zeros, or the top `n` of them when
/// `p > n`.
pub fn kernel_stieltjes(sample_spectrum: &[f64], n: usize, z: Complex64) -> Complex64 {
    let p = sample_spectrum.len();
    let used = p.min(n);
    let mut acc: Complex64 = sample_spectrum[..used].iter().map(|&l| 1.0 / (l - z)).sum();
    if n > p {
        acc += (n - p) as f64 / -z;
    }
    acc / n as f64
}

/// `K` log-spaced atoms on `[0.5 min g (1 - sqrt(1/c))^2, 1.5 max g]`. When
/// the lower end degenerates (`c <= 1` or a zero eigenvalue) it falls back
/// to `1e-3` times the smallest positive eigenvalue.
pub fn default_grid(sample_spectrum: &[f64], c: Concentration, k: usize) -> Vec<f64> {
    let max = sample_spectrum.iter().cloned().fold(f64::MIN, f64::max);
    let min_pos = sample_spectrum.iter().cloned().filter(|&g| g > 0.0).fold(f64::INFINITY, f64::min);
    let shrink = (1.0 - c.ratio().sqrt()).max(0.0).powi(2);
    let mut lo = 0.5 * sample_spectrum.iter().cloned().fold(f64::INFINITY, f64::min) * shrink;
    if !(lo > 0.0) {
        lo = 1e-3 * min_pos;
    }
    let hi = 1.5 * max;
    if k == 1 {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect()
}

/// `J` probes `x_j + 0.1 i span`, `x_j` equally spaced over the sample
/// spectrum's range. The span is floored at a tenth of the largest value so
/// a flat spectrum still gets probes off the real axis.
pub fn default_probes(sample_spectrum: &[f64], j: usize) -> Vec<Complex64> {
    let max = sample_spectrum.iter().cloned().fold(f64::MIN, f64::max);
    let min = sample_spectrum.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = (max - min).max(0.1 * max);
    let im = 0.1 * span;
    if j == 1 {
        return vec![Complex64::new(0.5 * (min + max), im)];
    }
    (0..j).map(|i| Complex64::new(min + (max - min) * i as f64 / (j - 1) as f64, im)).collect()
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().cloned().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// Least squares on a fixed support with `sum w = 1`, via the KKT system.
fn equality_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, support: &[usize]) -> Option<DVector<f64>> {
    let s = support.len();
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    let mut rhs = DVector::zeros(s + 1);
    for (i, &ci) in support.iter().enumerate() {
        for (j, &cj) in support.iter().enumerate() {
            kkt[(i, j)] = a.column(ci).dot(&a.column(cj));
        }
        kkt[(i, s)] = 1.0;
        kkt[(s, i)] = 1.0;
        rhs[i] = a.column(ci).dot(b);
    }
    rhs[s] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    let mut w = DVector::zeros(a.ncols());
    for (i, &ci) in support.iter().enumerate() {
        w[ci] = sol[i];
    }
    w.iter().all(|x| x.is_finite()).then_some(w)
}

fn objective(a: &DMatrix<f64>, b: &DVector<f64>, w: &DVector<f64>) -> f64 {
    (a * w - b).norm_squared()
}

/// Minimizes `||A w - b||^2` over the probability simplex. Accelerated
/// projected gradient, then an exact solve on the detected support.
pub fn simplex_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let k = a.ncols();
    if k == 0 {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
    }
    let ata = a.tr_mul(a);
    let atb = a.tr_mul(b);
    let lip = ata.clone().symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max);
    if !(lip > 0.0) {
        return Ok(DVector::from_element(k, 1.0 / k as f64));
    }
    let step = 1.0 / lip;
    let mut w = DVector::from_element(k, 1.0 / k as f64);
    let mut v = w.clone();
    let mut t = 1.0_f64;
    for _ in 0..20_000 {
        let grad = &ata * &v - &atb;
        let next = project_simplex(&(&v - step * grad));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved = (&next - &w).amax();
        v = &next + ((t - 1.0) / t_next) * (&next - &w);
        w = next;
        t = t_next;
        if moved < 1e-15 {
            break;
        }
    }
    let support: Vec<usize> = (0..k).filter(|&i| w[i] > 1e-10).collect();
    if let Some(polished) = equality_least_squares(a, b, &support) {
        if polished.iter().all(|&x| x >= 0.0) && objective(a, b, &polished) <= objective(a, b, &w) {
            return Ok(polished);
        }
    }
    Ok(w)
}

/// Fits `H = sum_k w_k delta(t_k)` on `grid` by minimizing `sum_j |e_j|^2`,
/// `e_j = 1/m_j + z_j - (p/n) sum_k w_k t_k / (1 + m_j t_k)`, where `m_j` is the
/// kernel Stieltjes transform at probe `z_j`.
pub fn elkaroui_invert(
    sample_spectrum: &[f64],
    c: Concentration,
    grid: &[f64],
    probes: &[Complex64],
) -> Result<Inversion> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    if grid.iter().any(|&t| !(t > 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be positive and strictly ascending".into()));
    }
    if probes.is_empty() || probes.iter().any(|z| !(z.im > 0.0)) {
        return Err(Error::InvalidInput("probes must be non-empty with Im z > 0".into()));
    }
    let p = sample_spectrum.len();
    let n = ((c.value() * p as f64).round() as usize).max(1);
    let y = c.ratio();
    let (jn, k) = (probes.len(), grid.len());
    let mut a = DMatrix::zeros(2 * jn, k);
    let mut b = DVector::zeros(2 * jn);
    for (j, &z) in probes.iter().enumerate() {
        let m = kernel_stieltjes(sample_spectrum, n, z);
        let base = 1.0 / m + z;
        b[2 * j] = -base.re;
        b[2 * j + 1] = -base.im;
        for (col, &t) in grid.iter().enumerate() {
            let term = -y * t / (1.0 + m * t);
            a[(2 * j, col)] = term.re;
            a[(2 * j + 1, col)] = term.im;
        }
    }
    let w = simplex_least_squares(&a, &b)?;
    let objective = objective(&a, &b, &w);
    let (locs, ws): (Vec<f64>, Vec<f64>) = grid.iter().zip(w.iter()).filter(|(_, &x)| x > 1e-12).map(|(&t, &x)| (t, x)).unzip();
    let total: f64 = ws.iter().sum();
    let distribution = SpectralDistribution::new(locs, ws.iter().map(|x| x / total).collect())?;
    Ok(Inversion { distribution, weights: w.iter().cloned().collect(), objective })
}
