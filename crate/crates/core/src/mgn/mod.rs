//! The cascaded (C-MGN) and modular (M-MGN) monotone gradient networks.
//!
//! Both architectures are generic over [`Scalar`]: the `f64` instantiation
//! is what users evaluate, the [`Dual`](crate::Dual) instantiation is what
//! the training engine differentiates.

mod cmgn;
mod invert;
mod io;
mod mmgn;
mod params;
mod spec;

pub use cmgn::CmgnModel;
pub use invert::{invert, MAX_NEWTON_ITERATIONS};
pub use io::{load_model, model_from_str, model_to_string, save_model, FORMAT_VERSION};
pub use mmgn::{MmgnModel, MmgnModule};
pub use params::{ParamView, Segment};
pub use spec::{init_params, random_model, Architecture, CmgnSpec, MmgnSpec, ModelSpec, OneOrMany};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, Scalar};

/// Either architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum MgnModel<T = f64> {
    Cmgn(CmgnModel<T>),
    Mmgn(MmgnModel<T>),
}

impl<T: Scalar> MgnModel<T> {
    pub fn architecture(&self) -> Architecture {
        match self {
            MgnModel::Cmgn(_) => Architecture::Cmgn,
            MgnModel::Mmgn(_) => Architecture::Mmgn,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            MgnModel::Cmgn(m) => m.n(),
            MgnModel::Mmgn(m) => m.n(),
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            MgnModel::Cmgn(m) => m.gamma,
            MgnModel::Mmgn(m) => m.gamma,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            MgnModel::Cmgn(m) => m.param_count(),
            MgnModel::Mmgn(m) => m.param_count(),
        }
    }

    fn v(&self) -> &DenseMatrix<T> {
        match self {
            MgnModel::Cmgn(m) => &m.v,
            MgnModel::Mmgn(m) => &m.v,
        }
    }

    /// Binds the input-independent affine term `VᵀV + γI` for a run of
    /// evaluations. Recomputed on every call, never cached on the model.
    pub fn prepare(&self) -> Prepared<'_, T> {
        let mut affine = self.v().gram();
        affine.add_diag(T::from_f64(self.gamma()));
        Prepared { model: self, affine }
    }
}

/// A model with its affine term evaluated, for batches of inputs.
#[derive(Debug)]
pub struct Prepared<'a, T = f64> {
    model: &'a MgnModel<T>,
    affine: DenseMatrix<T>,
}

impl<T: Scalar> Prepared<'_, T> {
    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        self.eval(x, false).0
    }

    pub fn forward_jacobian(&self, x: &[T]) -> (Vec<T>, DenseMatrix<T>) {
        let (y, j) = self.eval(x, true);
        (y, j.expect("jacobian requested"))
    }

    fn eval(&self, x: &[T], with_jacobian: bool) -> (Vec<T>, Option<DenseMatrix<T>>) {
        assert_eq!(x.len(), self.n(), "input dimension");
        match self.model {
            MgnModel::Cmgn(m) => m.eval(&self.affine, x, with_jacobian),
            MgnModel::Mmgn(m) => m.eval(&self.affine, x, with_jacobian),
        }
    }
}

impl MgnModel<f64> {
    fn check_dim(&self, x: &DenseVector) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        self.check_dim(x)?;
        Ok(DenseVector::from_vec(self.prepare().forward(x.as_slice())))
    }

    /// Input-Jacobian; symmetric by construction.
    pub fn jacobian(&self, x: &DenseVector) -> Result<DenseMatrix> {
        self.check_dim(x)?;
        Ok(self.prepare().forward_jacobian(x.as_slice()).1)
    }

    pub fn forward_jacobian(&self, x: &DenseVector) -> Result<(DenseVector, DenseMatrix)> {
        self.check_dim(x)?;
        let (y, j) = self.prepare().forward_jacobian(x.as_slice());
        Ok((DenseVector::from_vec(y), j))
    }

    pub fn forward_batch(&self, xs: &[DenseVector]) -> Result<Vec<DenseVector>> {
        let prepared = self.prepare();
        xs.iter()
            .map(|x| {
                self.check_dim(x)?;
                Ok(DenseVector::from_vec(prepared.forward(x.as_slice())))
            })
            .collect()
    }
}

impl From<CmgnModel> for MgnModel {
    fn from(m: CmgnModel) -> Self {
        MgnModel::Cmgn(m)
    }
}

impl From<MmgnModel> for MgnModel {
    fn from(m: MmgnModel) -> Self {
        MgnModel::Mmgn(m)
    }
}
