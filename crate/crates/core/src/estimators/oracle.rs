//! Oracle spectra on a fixed eigenbasis, and the `V diag(g) V^T` rebuild.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{EigenDecomposition, SymmetricMatrix};

/// `v_i^T M v_i` for every basis column.
fn quadratic_forms(basis: &EigenDecomposition, m: &DMatrix<f64>) -> Vec<f64> {
    let v = &basis.eigenvectors;
    let mv = m * v;
    (0..basis.dim()).map(|i| v.column(i).dot(&mv.column(i))).collect()
}

fn check_dims(basis: &EigenDecomposition, population: &SymmetricMatrix) -> Result<()> {
    if basis.dim() != population.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), got: population.dim() });
    }
    Ok(())
}

/// Variances of the population along the given eigenvectors; the spectrum
/// minimising `||C - sum_i g_i v_i v_i^T||_F` over `g`.
pub fn spectrum_oracle(basis: &EigenDecomposition, population: &SymmetricMatrix) -> Result<Vec<f64>> {
    check_dims(basis, population)?;
    Ok(quadratic_forms(basis, population.as_matrix()))
}

/// `(v_i^T C^{-1} v_i)^{-1}`: the spectrum whose inverse best matches the
/// population precision matrix.
pub fn precision_oracle(basis: &EigenDecomposition, population: &SymmetricMatrix) -> Result<Vec<f64>> {
    check_dims(basis, population)?;
    let inv = population.inverse()?;
    Ok(quadratic_forms(basis, inv.as_matrix()).into_iter().map(|q| 1.0 / q).collect())
}

/// `V diag(spectrum) V^T`.
pub fn rebuild(basis: &EigenDecomposition, spectrum: &[f64]) -> Result<SymmetricMatrix> {
    if spectrum.len() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), got: spectrum.len() });
    }
    if let Some((index, &value)) = spectrum.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeSpectrum { index, value });
    }
    Ok(basis.rebuild_unchecked(spectrum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigendecompose;
    use crate::sampling::{random_rotation, rng};
    use rand::Rng;

    fn random_spd(p: usize, seed: u64) -> SymmetricMatrix {
        let mut r = rng(seed);
        let a = DMatrix::from_fn(p, p, |_, _| r.random_range(-1.0..1.0));
        SymmetricMatrix::symmetrize(&a * a.transpose() + DMatrix::identity(p, p) * 0.1).unwrap()
    }

    fn random_basis(p: usize, seed: u64) -> EigenDecomposition {
        eigendecompose(&random_spd(p, seed)).unwrap()
    }

    #[test]
    fn exact_eigenbasis_recovers_population() {
        let c = random_spd(6, 1);
        let e = eigendecompose(&c).unwrap();
        let star = spectrum_oracle(&e, &c).unwrap();
        let dia = precision_oracle(&e, &c).unwrap();
        for i in 0..6 {
            assert!((star[i] - e.eigenvalues[i]).abs() < 1e-10 * e.eigenvalues[0]);
            assert!((dia[i] - e.eigenvalues[i]).abs() < 1e-8 * e.eigenvalues[0]);
        }
    }

    #[test]
    fn identity_population_gives_unit_oracle() {
        let b = random_basis(5, 2);
        let star = spectrum_oracle(&b, &SymmetricMatrix::identity(5)).unwrap();
        assert!(star.iter().all(|g| (g - 1.0).abs() < 1e-12));
    }

    #[test]
    fn matches_direct_quadratic_forms() {
        let b = random_basis(4, 3);
        let c = random_spd(4, 4);
        let cinv = c.as_matrix().clone().try_inverse().unwrap();
        let star = spectrum_oracle(&b, &c).unwrap();
        let dia = precision_oracle(&b, &c).unwrap();
        for i in 0..4 {
            let mut q = 0.0;
            let mut qi = 0.0;
            for r in 0..4 {
                for s in 0..4 {
                    let vv = b.eigenvectors[(r, i)] * b.eigenvectors[(s, i)];
                    q += vv * c.as_matrix()[(r, s)];
                    qi += vv * cinv[(r, s)];
                }
            }
            assert!((star[i] - q).abs() < 1e-12);
            assert!((dia[i] - 1.0 / qi).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_and_singularity_errors() {
        let b = random_basis(3, 5);
        assert!(spectrum_oracle(&b, &SymmetricMatrix::identity(4)).is_err());
        let sing = SymmetricMatrix::from_diagonal(&[1.0, 1.0, 0.0]);
        assert!(matches!(precision_oracle(&b, &sing), Err(Error::Singular(_))));
    }

    #[test]
    fn rebuild_contracts() {
        let c = random_spd(5, 6);
        let e = eigendecompose(&c).unwrap();
        let back = rebuild(&e, &e.eigenvalues).unwrap();
        assert!((back.as_matrix() - c.as_matrix()).amax() < 1e-10);
        let id = rebuild(&e, &[1.0; 5]).unwrap();
        assert!((id.as_matrix() - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
        let g = [0.5, 4.0, 2.0, 0.0, 1.0];
        let spec = eigendecompose(&rebuild(&e, &g).unwrap()).unwrap().eigenvalues;
        let mut sorted = g.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in spec.iter().zip(&sorted) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(matches!(rebuild(&e, &[1.0, -1.0, 1.0, 1.0, 1.0]), Err(Error::NegativeSpectrum { index: 1, .. })));
        assert!(rebuild(&e, &[1.0; 4]).is_err());
    }

    #[test]
    fn oracle_dominance_against_random_spectra() {
        let mut r = rng(77);
        for trial in 0..10 {
            let p = 6;
            let c = random_spd(p, 100 + trial);
            let cinv = c.inverse().unwrap();
            let q = random_rotation(p, trial).unwrap();
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(p, |i, _| (p - i) as f64));
            let b = eigendecompose(&SymmetricMatrix::symmetrize(&q * d * q.transpose()).unwrap()).unwrap();
            let star = spectrum_oracle(&b, &c).unwrap();
            let dia = precision_oracle(&b, &c).unwrap();
            let best = rebuild(&b, &star).unwrap().frobenius_distance_sq(&c).unwrap();
            let inv_dia: Vec<f64> = dia.iter().map(|g| 1.0 / g).collect();
            let best_prec = rebuild(&b, &inv_dia).unwrap().frobenius_distance_sq(&cinv).unwrap();
            for i in 0..p {
                assert!(dia[i] <= star[i] * (1.0 + 1e-12));
            }
            for _ in 0..100 {
                let g: Vec<f64> = star.iter().map(|s| s * r.random_range(0.5..1.5)).collect();
                assert!(rebuild(&b, &g).unwrap().frobenius_distance_sq(&c).unwrap() >= best - 1e-12);
                let gi: Vec<f64> = dia.iter().map(|s| 1.0 / (s * r.random_range(0.5..1.5))).collect();
                assert!(rebuild(&b, &gi).unwrap().frobenius_distance_sq(&cinv).unwrap() >= best_prec - 1e-12);
            }
        }
    }
}
