use crate::error::Result;
use crate::linalg::{svd_compact, Matrix};

/// Sum of singular values. Empty matrices have norm 0.
pub fn nuclear_norm(a: &Matrix) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(svd_compact(a)?.sigma.iter().sum())
}

/// Threshold below which a singular value counts as zero:
/// `trunc · max(1, σ₁)`.
pub fn truncation_threshold(trunc: f64, sigma_max: f64) -> f64 {
    trunc * sigma_max.max(1.0)
}

/// Canonical subgradient `U⁽¹⁾V⁽¹⁾ᵀ` of the nuclear norm, where `U⁽¹⁾`,
/// `V⁽¹⁾` hold the singular vectors whose singular values survive
/// truncation. The complementary block of the subdifferential is taken
/// to be zero.
pub fn nuclear_norm_subgradient(a: &Matrix, trunc: f64) -> Result<Matrix> {
    Ok(nuclear_norm_with_subgradient(a, trunc)?.1)
}

/// Nuclear norm and its canonical subgradient from a single factorization.
pub fn nuclear_norm_with_subgradient(a: &Matrix, trunc: f64) -> Result<(f64, Matrix)> {
    debug_assert!(trunc > 0.0);
    if a.is_empty() {
        return Ok((0.0, Matrix::zeros(a.rows(), a.cols())));
    }
    let svd = svd_compact(a)?;
    let norm = svd.sigma.iter().sum();
    let s = svd.rank_above(truncation_threshold(trunc, svd.sigma[0]));
    if s == 0 {
        return Ok((norm, Matrix::zeros(a.rows(), a.cols())));
    }
    let g = svd
        .u
        .leading_columns(s)
        .matmul_tr(&svd.v.leading_columns(s))?;
    Ok((norm, g))
}
