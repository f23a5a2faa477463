//! Dense complex kernels and structured weighted shifts.

pub mod eigen;
pub mod io;
pub mod matrix;
pub mod random;
pub mod shift;

pub use eigen::{hermitian_eigen, hermitian_eigenvalues, lambda_max, unitary_exp, HermitianEigen};
pub use matrix::{c64, cis_turns, operator_norm, orthonormal_complement, ComplexMatrix, C64};
pub use shift::{
    ws_adjoint, ws_mul, ws_norm, ws_sub, WeightedShiftOperator, WeightedShiftOperator2D, DENSE_CAP,
};
