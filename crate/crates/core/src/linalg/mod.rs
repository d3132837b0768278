//! Dense double-precision linear algebra.
//!
//! Vectors and matrices are generic over [`Scalar`] so that the same model
//! code runs on plain `f64` and on [`Dual`] numbers carrying one tangent.
//! Decompositions that the losses differentiate through (Cholesky, log
//! determinant, triangular solves) are generic too; the eigensolver and the
//! PSD square root are `f64` only.

mod decomp;
mod dual;
mod matrix;
mod scalar;

pub use decomp::{
    cholesky, logdet_pd, solve_lower, solve_spd, solve_upper_from_lower, sqrt_psd, sym_eigen,
    SymEigen, SYMMETRY_TOL,
};
pub use dual::Dual;
pub use matrix::{DenseMatrix, DenseVector};
pub use scalar::Scalar;
