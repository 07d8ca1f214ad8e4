//! Helpers shared by the integration tests. The oracles here use nalgebra,
//! never the crate's own factorizations.
#![allow(dead_code)]

use grsvnet::linalg::Matrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
    Matrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn to_na(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j))
}

pub fn from_na(a: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Singular values from the eigenvalues of `AᵀA` (or `AAᵀ`), descending.
pub fn oracle_singular_values(a: &Matrix) -> Vec<f64> {
    let na = to_na(a);
    let gram = if a.rows() >= a.cols() {
        na.transpose() * &na
    } else {
        &na * na.transpose()
    };
    let mut s: Vec<f64> = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn oracle_nuclear_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    to_na(a).singular_values().iter().sum()
}

/// `m × k` matrix with orthonormal columns (QR of a random square).
pub fn orthonormal_columns(rng: &mut ChaCha8Rng, m: usize, k: usize) -> Matrix {
    let g = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    let q = g.qr().q();
    from_na(&q.columns(0, k).into_owned())
}

pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    to_na(a).singular_values().max()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
