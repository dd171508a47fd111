//! Dense complex linear algebra and the two state representations.

pub mod eigen;
pub mod functions;
pub mod matrix;
pub mod random;
pub mod state;

pub use eigen::{eig_hermitian, HermitianEigen};
pub use functions::{
    clamp_singular_values, exp_i_hermitian, matrix_log_unitary, matrix_sqrt_psd, spectral_norm,
    svd_square,
};
pub use matrix::{ComplexMatrix, RealMatrix};
pub use state::{measure_z, DensityMatrix, SimplexVector};

use crate::scalar::Real;

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    a.kron(b)
}
