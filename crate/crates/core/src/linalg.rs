//! Dense matrix containers and the symmetric eigendecomposition contract.
//!
//! Eigenvalues are always returned in descending order and every eigenvector
//! is sign-normalised so that its largest-magnitude component is positive
//! (first index wins on ties). Cross-fold comparisons of eigenvectors rely on
//! this being deterministic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, MatrixDiagnostics, Result};

const SYMMETRY_RTOL: f64 = 1e-12;

/// How the column means of a [`DataMatrix`] are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    /// Observations are modelled as zero-mean; covariances divide by `n`.
    #[default]
    ZeroMean,
    /// Column means are estimated and removed; covariances divide by `n - 1`.
    Centered,
}

/// `n` observations (rows) of dimension `p` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    mean_mode: MeanMode,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, mean_mode: MeanMode) -> Result<Self> {
        let (n, p) = values.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput(format!("data matrix must be non-empty, got {n}x{p}")));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {}, column {}",
                idx % n,
                idx / n
            )));
        }
        if mean_mode == MeanMode::Centered && n < 2 {
            return Err(Error::TooFewObservations { needed: 2, got: n });
        }
        Ok(Self { values, mean_mode })
    }

    /// Builds from row vectors, all of which must share the same length.
    pub fn from_rows(rows: &[Vec<f64>], mean_mode: MeanMode) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some((t, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::InvalidInput(format!(
                "row {t} has {} columns, expected {p}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]), mean_mode)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn mean_mode(&self) -> MeanMode {
        self.mean_mode
    }

    pub fn with_mean_mode(mut self, mean_mode: MeanMode) -> Result<Self> {
        if mean_mode == MeanMode::Centered && self.rows() < 2 {
            return Err(Error::TooFewObservations { needed: 2, got: self.rows() });
        }
        self.mean_mode = mean_mode;
        Ok(self)
    }

    /// Observation `t` as an owned column vector.
    pub fn row(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }

    /// Applies an orthonormal `q` to every observation: `x_t -> q x_t`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.nrows() != self.cols() || q.ncols() != self.cols() {
            return Err(Error::DimensionMismatch { expected: self.cols(), got: q.nrows() });
        }
        Ok(Self { values: &self.values * q.transpose(), mean_mode: self.mean_mode })
    }
}

/// A real symmetric `p x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Validates squareness, finiteness and symmetry (1e-12 relative).
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    /// Averages `m` with its transpose; for products that are symmetric in
    /// exact arithmetic only.
    pub fn symmetrize(m: DMatrix<f64>) -> Result<Self> {
        let s = (&m + m.transpose()) * 0.5;
        Self::new(s)
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn diagnostics(&self) -> MatrixDiagnostics {
        diagnostics(&self.0)
    }

    /// Squared Frobenius distance `||self - other||_F^2`.
    pub fn frobenius_distance_sq(&self, other: &SymmetricMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    /// Inverse via the eigendecomposition; fails when the smallest eigenvalue
    /// is below `1e-12` times the largest.
    pub fn inverse(&self) -> Result<Self> {
        let eig = eigendecompose(self)?;
        let max = eig.eigenvalues.first().copied().unwrap_or(0.0);
        let min = eig.eigenvalues.last().copied().unwrap_or(0.0);
        if !(max > 0.0) || min <= 1e-12 * max {
            return Err(Error::Singular(format!(
                "eigenvalue range [{min:.3e}, {max:.3e}] is not safely positive"
            )));
        }
        let inv: Vec<f64> = eig.eigenvalues.iter().map(|g| 1.0 / g).collect();
        Ok(eig.rebuild_unchecked(&inv))
    }
}

fn diagnostics(m: &DMatrix<f64>) -> MatrixDiagnostics {
    MatrixDiagnostics {
        dim: m.nrows(),
        frobenius_norm: m.norm(),
        max_abs_entry: m.amax(),
        trace: if m.is_square() { m.trace() } else { f64::NAN },
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvector
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Column `i` of the eigenvector matrix.
    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// `V diag(spectrum) V^T`, symmetrised, without validating the spectrum.
    pub(crate) fn rebuild_unchecked(&self, spectrum: &[f64]) -> SymmetricMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= spectrum[j];
        }
        let m = scaled * v.transpose();
        SymmetricMatrix((&m + m.transpose()) * 0.5)
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.rebuild_unchecked(&self.eigenvalues)
    }
}

/// Symmetric eigendecomposition with descending eigenvalues and the
/// largest-component-positive sign convention.
pub fn eigendecompose(m: &SymmetricMatrix) -> Result<EigenDecomposition> {
    eigen_of(m.as_matrix().clone())
}

/// Same as [`eigendecompose`] for a matrix already known to be symmetric.
pub(crate) fn eigen_of(m: DMatrix<f64>) -> Result<EigenDecomposition> {
    let p = m.nrows();
    let diag = diagnostics(&m);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 100 * p.max(10))
        .ok_or(Error::EigenNonConvergence(diag))?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNonConvergence(diag));
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut lead = 0;
        for j in 1..p {
            if col[j].abs() > col[lead].abs() {
                lead = j;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        eigenvectors.column_mut(dst).copy_from(&(col * sign));
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(p: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        SymmetricMatrix::symmetrize(&a + a.transpose()).unwrap()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let e = eigendecompose(&SymmetricMatrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        let vtv = e.eigenvectors.transpose() * &e.eigenvectors;
        assert!((vtv - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn diagonal_is_sorted_and_signed() {
        let e = eigendecompose(&SymmetricMatrix::from_diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 2.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[1., 0., 0., 0., 0., 1., 0., 1., 0.]);
        assert!((e.eigenvectors - expected).amax() < 1e-12);
    }

    #[test]
    fn random_round_trip() {
        let m = random_symmetric(5, 11);
        let e = eigendecompose(&m).unwrap();
        let err = (e.reconstruct().as_matrix() - m.as_matrix()).norm() / m.as_matrix().norm();
        assert!(err < 1e-8, "relative error {err}");
        for w in e.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for i in 0..5 {
            let v = e.vector(i);
            let lead = v.iamax();
            assert!(v[lead] > 0.0);
        }
    }

    #[test]
    fn rejects_asymmetric_and_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        assert!(SymmetricMatrix::new(m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert!(SymmetricMatrix::new(m).is_err());
    }

    #[test]
    fn data_matrix_validation() {
        assert!(DataMatrix::new(DMatrix::zeros(0, 3), MeanMode::ZeroMean).is_err());
        assert!(DataMatrix::new(DMatrix::zeros(1, 3), MeanMode::Centered).is_err());
        assert!(DataMatrix::new(DMatrix::from_element(2, 2, f64::INFINITY), MeanMode::ZeroMean)
            .is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]], MeanMode::ZeroMean).is_err());
    }

    #[test]
    fn inverse_of_diagonal() {
        let inv = SymmetricMatrix::from_diagonal(&[4.0, 2.0]).inverse().unwrap();
        assert!((inv.as_matrix()[(0, 0)] - 0.25).abs() < 1e-15);
        assert!(SymmetricMatrix::from_diagonal(&[1.0, 0.0]).inverse().is_err());
    }

    proptest::proptest! {
        #[test]
        fn round_trip_property(p in 1usize..12, seed in 0u64..1000) {
            let m = random_symmetric(p, seed);
            let e = eigendecompose(&m).unwrap();
            let norm = m.as_matrix().norm().max(1e-300);
            let err = (e.reconstruct().as_matrix() - m.as_matrix()).norm() / norm;
            proptest::prop_assert!(err < 1e-8);
            let vtv = e.eigenvectors.transpose() * &e.eigenvectors;
            proptest::prop_assert!((vtv - DMatrix::identity(p, p)).amax() < 1e-10);
            for w in e.eigenvalues.windows(2) {
                proptest::prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
