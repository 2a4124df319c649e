//! Seeded Gaussian data with a prescribed population spectrum.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{DataMatrix, MeanMode, SymmetricMatrix};

/// Population covariance `V diag(eigenvalues) V^T`; `V` is the identity when
/// `basis` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumModel {
    eigenvalues: Vec<f64>,
    basis: Option<DMatrix<f64>>,
}

impl SpectrumModel {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidInput("spectrum must be non-empty".into()));
        }
        if let Some((i, v)) = eigenvalues.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("population eigenvalue {i} is {v}, must be > 0")));
        }
        Ok(Self { eigenvalues, basis: None })
    }

    /// Attaches an orthonormal basis (columns are population eigenvectors).
    pub fn with_basis(mut self, basis: DMatrix<f64>) -> Result<Self> {
        let p = self.dim();
        if basis.nrows() != p || basis.ncols() != p {
            return Err(Error::DimensionMismatch { expected: p, got: basis.nrows() });
        }
        let err = (basis.transpose() * &basis - DMatrix::<f64>::identity(p, p)).amax();
        if err > 1e-8 {
            return Err(Error::InvalidInput(format!("basis is not orthonormal (error {err:.2e})")));
        }
        self.basis = Some(basis);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> Option<&DMatrix<f64>> {
        self.basis.as_ref()
    }

    pub fn covariance(&self) -> SymmetricMatrix {
        let d = SymmetricMatrix::from_diagonal(&self.eigenvalues);
        match &self.basis {
            None => d,
            Some(v) => {
                let m = v * d.as_matrix() * v.transpose();
                SymmetricMatrix::symmetrize(m).expect("finite by construction")
            }
        }
    }

    /// `20% / 40% / 40%` style block spectrum: `fractions[k]` of the `p`
    /// eigenvalues equal `levels[k]`, sorted descending. Block sizes are
    /// rounded, with the remainder assigned to the first block.
    pub fn block(p: usize, fractions: &[f64], levels: &[f64]) -> Result<Self> {
        if fractions.len() != levels.len() || fractions.is_empty() {
            return Err(Error::InvalidInput("fractions and levels must have equal, non-zero length".into()));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("fractions sum to {total}, expected 1")));
        }
        let mut counts: Vec<usize> = fractions.iter().map(|f| (f * p as f64).round() as usize).collect();
        let assigned: usize = counts[1..].iter().sum();
        counts[0] = p.saturating_sub(assigned);
        let mut eig: Vec<f64> = counts
            .iter()
            .zip(levels)
            .flat_map(|(&c, &l)| std::iter::repeat_n(l, c))
            .collect();
        eig.truncate(p);
        eig.sort_by(|a, b| b.total_cmp(a));
        Self::new(eig)
    }
}

/// Splitmix64 finaliser; mixes a master seed with stream coordinates so every
/// (cell, repetition) draws from an independent stream regardless of schedule.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    let mut h = splitmix(master);
    for &c in coords {
        h = splitmix(h ^ splitmix(c.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// `n` i.i.d. rows from `N(0, V diag(gamma) V^T)`, reproducible per seed.
pub fn sample_gaussian(model: &SpectrumModel, n: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let p = model.dim();
    let mut rng = rng(seed);
    let scale: Vec<f64> = model.eigenvalues.iter().map(|g| g.sqrt()).collect();
    let mut z = DMatrix::<f64>::zeros(n, p);
    for t in 0..n {
        for j in 0..p {
            let e: f64 = StandardNormal.sample(&mut rng);
            z[(t, j)] = e * scale[j];
        }
    }
    let values = match &model.basis {
        None => z,
        Some(v) => z * v.transpose(),
    };
    DataMatrix::new(values, MeanMode::ZeroMean)
}

/// Gaussian rows with a shared mean vector added.
pub(crate) fn sample_gaussian_shifted(
    model: &SpectrumModel,
    mean: &DVector<f64>,
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let mut x = sample_gaussian(model, n, seed)?.into_values();
    for mut row in x.row_iter_mut() {
        row += mean.transpose();
    }
    Ok(x)
}

/// Haar-distributed orthonormal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_rotation(p: usize, seed: u64) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::InvalidInput("rotation dimension must be >= 1".into()));
    }
    let mut rng = rng(seed);
    let g = DMatrix::<f64>::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(q)
}
