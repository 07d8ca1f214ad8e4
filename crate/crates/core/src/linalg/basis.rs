use crate::error::{Error, Result};
use crate::linalg::{svd_compact, symmetric_eigen, Matrix, SvdResult};

/// A class subspace whose largest singular value falls below this is
/// declared rank 0.
pub const RANK_ZERO_FLOOR: f64 = 1e-10;

/// Orthonormal basis of one class subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    pub class_id: usize,
    /// `feature_dim × k`, orthonormal columns. `k = 0` is the degenerate
    /// all-zero class.
    pub u: Matrix,
}

impl SubspaceBasis {
    pub fn new(class_id: usize, u: Matrix) -> Self {
        SubspaceBasis { class_id, u }
    }

    pub fn empty(class_id: usize, feature_dim: usize) -> Self {
        SubspaceBasis {
            class_id,
            u: Matrix::zeros(feature_dim, 0),
        }
    }

    pub fn with_class_id(mut self, class_id: usize) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.u.rows()
    }

    /// Coordinates `Uᵀz` of `z` in this basis.
    pub fn coefficients(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.feature_dim() {
            return Err(Error::dim("project", self.feature_dim(), z.len()));
        }
        self.u.tr_matvec(z)
    }
}

/// Left singular vectors of `z_c` with `σᵢ ≥ ratio · σ₁`.
///
/// With more columns than rows the vectors come from the eigenpairs of
/// `Z Zᵀ` (`σᵢ² = λᵢ`); since only directions with `σᵢ/σ₁ ≥ ratio` are kept
/// the squared conditioning stays harmless. Otherwise a compact SVD is used.
pub fn orthonormal_basis(z_c: &Matrix, ratio: f64) -> Result<SubspaceBasis> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "basis ratio must lie in (0, 1], got {ratio}"
        )));
    }
    if z_c.cols() == 0 {
        return Err(Error::dim("orthonormal_basis", "at least one column", 0));
    }
    if z_c.cols() > z_c.rows() {
        // Power-of-two rescaling keeps the Gram matrix finite.
        let max = z_c.max_abs();
        let scale = if max > 0.0 {
            2f64.powi(max.log2().round() as i32)
        } else {
            1.0
        };
        let z = z_c.scaled(1.0 / scale);
        let gram = z.matmul_tr(&z)?;
        let ev = symmetric_eigen(&gram)?;
        let sigma: Vec<f64> = ev
            .values
            .iter()
            .map(|&l| scale * l.max(0.0).sqrt())
            .collect();
        Ok(truncate(&sigma, &ev.vectors, ratio))
    } else {
        Ok(basis_from_svd(&svd_compact(z_c)?, ratio, z_c.rows()))
    }
}

/// Applies the `σᵢ ≥ ratio · σ₁` rule to an existing factorization of a
/// matrix with `rows` rows.
pub fn basis_from_svd(svd: &SvdResult, ratio: f64, rows: usize) -> SubspaceBasis {
    if svd.sigma.is_empty() {
        return SubspaceBasis::empty(0, rows);
    }
    truncate(&svd.sigma, &svd.u, ratio)
}

fn truncate(sigma: &[f64], u: &Matrix, ratio: f64) -> SubspaceBasis {
    let top = sigma[0];
    if top < RANK_ZERO_FLOOR {
        return SubspaceBasis::empty(0, u.rows());
    }
    let k = sigma.iter().take_while(|&&s| s >= ratio * top).count();
    let mut u = u.leading_columns(k);
    normalize_signs(&mut u);
    SubspaceBasis::new(0, u)
}

/// First clearly nonzero entry of every column made nonnegative.
fn normalize_signs(u: &mut Matrix) {
    for k in 0..u.cols() {
        let col = u.column(k);
        let max = col.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if matches!(col.iter().find(|x| x.abs() > 1e-12 * max), Some(x) if *x < 0.0) {
            let flipped: Vec<f64> = col.iter().map(|x| -x).collect();
            u.set_column(k, &flipped);
        }
    }
}

/// Orthogonal projection `U Uᵀ z`.
pub fn project(basis: &SubspaceBasis, z: &[f64]) -> Result<Vec<f64>> {
    let c = basis.coefficients(z)?;
    if c.is_empty() {
        return Ok(vec![0.0; z.len()]);
    }
    basis.u.matvec(&c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_like(rows: usize, sigma: &[f64]) -> Matrix {
        Matrix::from_fn(
            rows,
            sigma.len(),
            |i, j| if i == j { sigma[j] } else { 0.0 },
        )
    }

    #[test]
    fn ratio_keeps_values_at_or_above_threshold() {
        let b = orthonormal_basis(&diag_like(4, &[10.0, 2.0, 1.5]), 0.1).unwrap();
        assert_eq!(b.rank(), 3);
        // 0.5 < 0.1 · 10, so the trailing direction is cut.
        let b = orthonormal_basis(&diag_like(4, &[10.0, 2.0, 0.5]), 0.1).unwrap();
        assert_eq!(b.rank(), 2);
        let b = orthonormal_basis(&diag_like(4, &[10.0, 0.9, 0.5]), 0.1).unwrap();
        assert_eq!(b.rank(), 1);
        let b = orthonormal_basis(&diag_like(4, &[10.0, 1.0, 0.5]), 0.1).unwrap();
        assert_eq!(b.rank(), 2);
    }

    #[test]
    fn plane_in_r3() {
        let z = Matrix::from_vec(
            3,
            4,
            vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let b = orthonormal_basis(&z, 0.1).unwrap();
        assert_eq!(b.rank(), 2);
        let p = b.u.matmul_tr(&b.u).unwrap();
        let expected = Matrix::from_fn(3, 3, |i, j| if i == j && i < 2 { 1.0 } else { 0.0 });
        assert!(p.sub(&expected).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn zero_features_give_rank_zero() {
        let b = orthonormal_basis(&Matrix::zeros(5, 3), 0.1).unwrap();
        assert_eq!(b.rank(), 0);
        assert_eq!(b.feature_dim(), 5);
        assert_eq!(project(&b, &[1.0; 5]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn projection_examples() {
        let b = SubspaceBasis::new(1, Matrix::from_fn(3, 2, |i, j| (i == j) as u8 as f64));
        assert_eq!(project(&b, &[3.0, 4.0, 5.0]).unwrap(), vec![3.0, 4.0, 0.0]);
        assert_eq!(project(&b, &[3.0, 4.0, 0.0]).unwrap(), vec![3.0, 4.0, 0.0]);
        assert!(matches!(
            project(&b, &[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn wide_and_tall_routes_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        // rank-3 signal plus small noise in R^8, 40 samples
        let l = Matrix::from_fn(8, 3, |_, j| rng.gen_range(-1.0..1.0) * (3 - j) as f64);
        let r = Matrix::from_fn(3, 40, |_, _| rng.gen_range(-1.0..1.0));
        let noise = Matrix::from_fn(8, 40, |_, _| rng.gen_range(-1e-3..1e-3));
        let z = l.matmul(&r).unwrap().add(&noise).unwrap();
        let wide = orthonormal_basis(&z, 0.1).unwrap();
        let tall = orthonormal_basis(&z.leading_columns(8), 0.1).unwrap();
        assert_eq!(wide.rank(), 3);
        assert_eq!(tall.rank(), 3);
        let svd = svd_compact(&z).unwrap();
        let expected = svd.u.leading_columns(3);
        let p_wide = wide.u.matmul_tr(&wide.u).unwrap();
        let p_svd = expected.matmul_tr(&expected).unwrap();
        assert!(p_wide.sub(&p_svd).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn bad_ratio_rejected() {
        assert!(orthonormal_basis(&Matrix::identity(2), 0.0).is_err());
        assert!(orthonormal_basis(&Matrix::identity(2), 1.5).is_err());
    }
}
