use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::FeatureSet;
use crate::error::{bail_shape, bail_validation, Result};

/// Ridge added to both covariances before the matrix square root.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// Mean and unbiased covariance of the rows.
pub fn gaussian_stats(features: &FeatureSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = features.len();
    if m < 2 {
        bail_validation!("covariance needs at least 2 rows, got {m}");
    }
    let d = features.dim();
    let x = DMatrix::from_row_iterator(m, d, features.rows().iter().copied());
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = matmul(&centered.transpose(), &centered) / (m as f64 - 1.0);
    Ok((mean, cov))
}

/// Plain triple loop with a fixed summation order.
fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| (0..a.ncols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

fn symmetric_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| eig.eigenvectors[(i, j)] * roots[j]);
    matmul(&scaled, &eig.eigenvectors.transpose())
}

/// `|mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))`, clamped at zero.
///
/// `Tr((S1 S2)^(1/2))` is taken as `Tr((A S2 A)^(1/2))` with `A = S1^(1/2)`,
/// which is symmetric and shares the eigenvalues of `S1 S2`.
pub fn frechet_distance(
    mu1: &DVector<f64>,
    s1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || s1.shape() != (d, d) || s2.shape() != (d, d) {
        bail_shape!("Gaussian statistics have mismatched dimensions");
    }
    let a = symmetric_sqrt(s1);
    let inner = matmul(&matmul(&a, s2), &a);
    let eig = SymmetricEigen::new((&inner + inner.transpose()) * 0.5);
    let tr_sqrt: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let diff = mu1 - mu2;
    let value = diff.dot(&diff) + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    Ok(value.max(0.0))
}

/// FID between two feature sets with ridge-regularised covariances.
pub fn fid(real: &FeatureSet, generated: &FeatureSet) -> Result<f64> {
    if real.dim() != generated.dim() {
        bail_shape!("feature widths differ: {} vs {}", real.dim(), generated.dim());
    }
    let ridge = DMatrix::identity(real.dim(), real.dim()) * COVARIANCE_RIDGE;
    let (mu1, s1) = gaussian_stats(real)?;
    let (mu2, s2) = gaussian_stats(generated)?;
    frechet_distance(&mu1, &(s1 + &ridge), &mu2, &(s2 + ridge))
}
