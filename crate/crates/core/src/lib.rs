//! Monotone gradient networks.
//!
//! Two architectures that parameterize the gradient of a convex function
//! directly: the cascaded [`CmgnModel`] and the modular [`MmgnModel`]. Both
//! have a symmetric positive semidefinite input-Jacobian for every parameter
//! setting, so every model is a monotone map.
//!
//! Around the models sit a small dense linear algebra layer with a dual
//! number scalar (used to differentiate losses with respect to parameters),
//! a forward-mode training loop with Adam, Gaussian transport utilities and
//! three experiment harnesses: gradient-field regression, Gaussian optimal
//! coupling and pixel-color domain adaptation.

pub mod activations;
pub mod error;
pub mod export;
pub mod gradfield;
#[cfg(feature = "png")]
pub mod imaging;
pub mod linalg;
pub mod mgn;
pub mod properties;
pub mod rng;
pub mod training;
pub mod transport;

pub use activations::Activation;
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector, Dual, Scalar};
pub use mgn::{CmgnModel, MgnModel, MmgnModel, ModelSpec, ParamView};

