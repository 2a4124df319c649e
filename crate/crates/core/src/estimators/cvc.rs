//! Cross-validated eigenvalue correction.
//!
//! For each fold the eigenvectors of the training-rows covariance are
//! computed, and the held-out rows are projected onto them. The corrected
//! variance of eigen-index `i` (descending-eigenvalue rank) is the mean of the
//! squared held-out projections over all rows. Squared projections are stored
//! per row and summed in row order, so the result does not depend on fold
//! order or on the parallel schedule; leave-one-out is exactly K-fold with
//! `k = n`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::{eigen_of, DataMatrix, EigenDecomposition, MeanMode};
use crate::par;
use crate::sampling::rng;

/// How held-out rows are projected onto training eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// `v_i^T x` (correct).
    Transposed,
    /// `(V x)_i`, the missing-transpose variant. Basis dependent.
    Untransposed,
}

/// Output of one cross-validation pass.
#[derive(Debug, Clone)]
pub struct CvRun {
    pub spectrum: Vec<f64>,
    /// Mean over folds of `|v_i^T v_i^{fold}|`, when a reference basis was
    /// supplied.
    pub stability: Option<Vec<f64>>,
}

/// Leave-one-out folds `{0}, {1}, ..., {n-1}`.
pub fn loo_folds(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|t| vec![t]).collect()
}

/// `k` near-equal folds from a seeded shuffle of `0..n`; each fold sorted.
pub fn kfold_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!(
            "fold count must satisfy 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

struct FoldResult {
    rows: Vec<usize>,
    sq_proj: Vec<Vec<f64>>,
    stability: Option<Vec<f64>>,
}

/// Runs cross-validation over explicit folds. Folds must partition `0..n`.
pub fn cross_validate(
    x: &DataMatrix,
    folds: &[Vec<usize>],
    projection: Projection,
    reference: Option<&EigenDecomposition>,
) -> Result<CvRun> {
    let (n, p) = (x.rows(), x.cols());
    let mut seen = vec![false; n];
    for fold in folds {
        if fold.is_empty() {
            return Err(Error::InvalidInput("empty fold".into()));
        }
        for &t in fold {
            if t >= n || std::mem::replace(&mut seen[t], true) {
                return Err(Error::InvalidInput(format!("folds do not partition rows (row {t})")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidInput("folds do not cover every row".into()));
    }
    let centered = x.mean_mode() == MeanMode::Centered;
    let min_train = if centered { 2 } else { 1 };
    if let Some(f) = folds.iter().find(|f| n - f.len() < min_train) {
        return Err(Error::TooFewObservations { needed: min_train, got: n - f.len() });
    }
    if let Some(r) = reference {
        if r.dim() != p {
            return Err(Error::DimensionMismatch { expected: p, got: r.dim() });
        }
    }

    let xv = x.values();
    let g = xv.tr_mul(xv);
    let gram = (&g + g.transpose()) * 0.5;
    let total: DVector<f64> = xv.row_sum().transpose();

    let results = par::map_slice(folds, |fold| -> Result<FoldResult> {
        let mut train = gram.clone();
        let mut sum = total.clone();
        for &t in fold {
            let r = xv.row(t);
            train.ger(-1.0, &r.transpose(), &r.transpose(), 1.0);
            sum -= r.transpose();
        }
        let n_tr = (n - fold.len()) as f64;
        let mean = if centered { Some(sum / n_tr) } else { None };
        let cov = match &mean {
            None => train / n_tr,
            Some(mu) => {
                let mut c = train;
                c.ger(-n_tr, mu, mu, 1.0);
                c / (n_tr - 1.0)
            }
        };
        let eig = eigen_of(cov)?;
        let v: &DMatrix<f64> = &eig.eigenvectors;
        let sq_proj = fold
            .iter()
            .map(|&t| {
                let mut y = xv.row(t).transpose();
                if let Some(mu) = &mean {
                    y -= mu;
                }
                let proj = match projection {
                    Projection::Transposed => v.tr_mul(&y),
                    Projection::Untransposed => v * &y,
                };
                proj.iter().map(|a| a * a).collect()
            })
            .collect();
        let stability = reference.map(|r| {
            (0..p).map(|i| r.eigenvectors.column(i).dot(&v.column(i)).abs()).collect()
        });
        Ok(FoldResult { rows: fold.clone(), sq_proj, stability })
    });

    let mut per_row: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut stability = reference.map(|_| vec![0.0; p]);
    for res in results {
        let res = res?;
        if let (Some(acc), Some(s)) = (stability.as_mut(), res.stability.as_ref()) {
            for (a, b) in acc.iter_mut().zip(s) {
                *a += b;
            }
        }
        for (t, sq) in res.rows.into_iter().zip(res.sq_proj) {
            per_row[t] = sq;
        }
    }
    let mut spectrum = vec![0.0; p];
    for row in &per_row {
        for (s, v) in spectrum.iter_mut().zip(row) {
            *s += v;
        }
    }
    for s in &mut spectrum {
        *s /= n as f64;
    }
    if let Some(acc) = stability.as_mut() {
        for a in acc.iter_mut() {
            *a /= folds.len() as f64;
        }
    }
    Ok(CvRun { spectrum, stability })
}

pub(crate) fn require_loo(x: &DataMatrix) -> Result<()> {
    if x.rows() < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: x.rows() });
    }
    Ok(())
}

/// Raw (non-isotonic) leave-one-out corrected spectrum.
pub fn loo_spectrum(x: &DataMatrix) -> Result<Vec<f64>> {
    require_loo(x)?;
    Ok(cross_validate(x, &loo_folds(x.rows()), Projection::Transposed, None)?.spectrum)
}

/// Raw K-fold corrected spectrum.
pub fn kfold_spectrum(x: &DataMatrix, k: usize, seed: u64) -> Result<Vec<f64>> {
    let folds = kfold_folds(x.rows(), k, seed)?;
    Ok(cross_validate(x, &folds, Projection::Transposed, None)?.spectrum)
}

/// Leave-one-out with untransposed projections.
pub fn buggy_loo_spectrum(x: &DataMatrix) -> Result<Vec<f64>> {
    require_loo(x)?;
    Ok(cross_validate(x, &loo_folds(x.rows()), Projection::Untransposed, None)?.spectrum)
}
