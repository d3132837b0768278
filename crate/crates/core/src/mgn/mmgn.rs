use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, Scalar};

/// One module `s(z)·Wᵀσ(z)` with `z = Wx + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmgnModule<T = f64> {
    pub(crate) w: DenseMatrix<T>,
    pub(crate) b: DenseVector<T>,
    pub(crate) activation: Activation,
}

impl<T: Scalar> MmgnModule<T> {
    pub fn new(w: DenseMatrix<T>, b: DenseVector<T>, activation: Activation) -> Result<Self> {
        if w.rows() == 0 || w.rows() != b.len() {
            return Err(Error::DimensionMismatch { expected: w.rows(), found: b.len() });
        }
        if !activation.prop2_eligible() {
            return Err(Error::InvalidModel(format!(
                "{activation} has no convex nonnegative potential; not usable in an M-MGN module"
            )));
        }
        Ok(Self { w, b, activation })
    }

    pub fn width(&self) -> usize {
        self.w.rows()
    }

    pub fn w(&self) -> &DenseMatrix<T> {
        &self.w
    }

    pub fn b(&self) -> &DenseVector<T> {
        &self.b
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Modular monotone gradient network.
///
/// ```text
/// g(x) = a + VᵀVx + γx + Σ_k s_k(z_k)·W_kᵀσ_k(z_k),   z_k = W_k x + b_k
/// ```
///
/// With `s_k` convex and nonnegative and `σ_k = ∇s_k`, each module adds
/// `s_k·W_kᵀJ_σW_k + (W_kᵀσ_k)(W_kᵀσ_k)ᵀ` to the Jacobian, both PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct MmgnModel<T = f64> {
    pub(crate) a: DenseVector<T>,
    pub(crate) v: DenseMatrix<T>,
    pub(crate) modules: Vec<MmgnModule<T>>,
    pub(crate) gamma: f64,
}

impl<T: Scalar> MmgnModel<T> {
    pub fn new(a: DenseVector<T>, v: DenseMatrix<T>, modules: Vec<MmgnModule<T>>, gamma: f64) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::InvalidModel("mmgn needs n ≥ 1".into()));
        }
        if v.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.cols() });
        }
        if let Some(m) = modules.iter().find(|m| m.w.cols() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: m.w.cols() });
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidModel(format!("gamma must be finite and ≥ 0, got {gamma}")));
        }
        Ok(Self { a, v, modules, gamma })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn rank(&self) -> usize {
        self.v.rows()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn a(&self) -> &DenseVector<T> {
        &self.a
    }

    pub fn v(&self) -> &DenseMatrix<T> {
        &self.v
    }

    pub fn modules(&self) -> &[MmgnModule<T>] {
        &self.modules
    }

    pub fn param_count(&self) -> usize {
        let n = self.n();
        n + self.rank() * n + self.modules.iter().map(|m| m.width() * (n + 1)).sum::<usize>()
    }

    pub(crate) fn eval(
        &self,
        affine: &DenseMatrix<T>,
        x: &[T],
        with_jacobian: bool,
    ) -> (Vec<T>, Option<DenseMatrix<T>>) {
        let mut out = affine.matvec(x);
        for (o, &a) in out.iter_mut().zip(self.a.iter()) {
            *o += a;
        }
        let mut jac = with_jacobian.then(|| affine.clone());
        for module in &self.modules {
            let act = module.activation;
            let mut z = module.w.matvec(x);
            for (zi, &bi) in z.iter_mut().zip(module.b.iter()) {
                *zi += bi;
            }
            let mut s = T::zero();
            for &zi in &z {
                s += act.potential_s(zi);
            }
            let sigma: Vec<T> = z.iter().map(|&zi| act.first_s(zi)).collect();
            let w_sigma = module.w.matvec_t(&sigma);
            for (o, &ws) in out.iter_mut().zip(&w_sigma) {
                *o += s * ws;
            }
            if let Some(j) = jac.as_mut() {
                let weights: Vec<T> = z.iter().map(|&zi| s * act.second_s(zi)).collect();
                j.add_assign_scaled(&module.w.weighted_gram(&weights), T::one());
                j.add_outer(&w_sigma, T::one());
            }
        }
        (out, jac)
    }
}
