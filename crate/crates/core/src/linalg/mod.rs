//! Minimal dense complex linear algebra.

mod eigen;
mod matrix;

pub(crate) use eigen::reconstruct_with;
pub use eigen::{
    eig_general, eig_hermitian, schur, EigenDecomposition, HERMITIAN_INPUT_TOL,
    MAX_EIGENVECTOR_CONDITION, QR_ITERATION_CAP,
};
pub use matrix::{dagger, kron, matmul, trace, ComplexMatrix, Ket, KET_NORM_TOL};
