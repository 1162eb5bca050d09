//! Dense row-major matrices and the Jacobi SVD.

mod matrix;
mod svd;

pub use matrix::Matrix;
pub use svd::{jacobi_svd, jacobi_svd_with, numerical_rank, SvdFactors, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
