//! Dense linear algebra: compact SVD, nuclear norm and its subgradient,
//! class-subspace bases and projections.

mod basis;
mod counter;
mod eigen;
mod matrix;
mod nuclear;
mod svd;

pub use basis::{basis_from_svd, orthonormal_basis, project, SubspaceBasis, RANK_ZERO_FLOOR};
pub use counter::factorization_count;
pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use matrix::{gemm, Matrix, Trans};
pub use nuclear::{
    nuclear_norm, nuclear_norm_subgradient, nuclear_norm_with_subgradient, truncation_threshold,
};
pub use svd::{svd_compact, SvdResult, MAX_SWEEPS, OFF_DIAGONAL_TOL};
