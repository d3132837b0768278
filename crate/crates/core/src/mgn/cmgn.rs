use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, Scalar};

/// Cascaded monotone gradient network.
///
/// ```text
/// z_0 = D_0·Wx + b_0
/// z_ℓ = D_ℓ·(Wx + σ_ℓ(z_{ℓ−1})) + b_ℓ        ℓ = 1 … L−1
/// g(x) = Wᵀ·D_L·σ_L(z_{L−1}) + VᵀVx + b_L + γx
/// ```
///
/// All layers share `W` (h×n). The diagonal scalings `D_ℓ` are optional and
/// identity when absent. Every `σ_ℓ` is monotonically increasing, which makes
/// the input-Jacobian `Wᵀ·diag(m)·W + VᵀV + γI` with `m ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmgnModel<T = f64> {
    pub(crate) w: DenseMatrix<T>,
    pub(crate) biases: Vec<DenseVector<T>>,
    pub(crate) out_bias: DenseVector<T>,
    pub(crate) v: DenseMatrix<T>,
    pub(crate) activations: Vec<Activation>,
    pub(crate) diag_scales: Option<Vec<DenseVector<T>>>,
    pub(crate) gamma: f64,
}

impl<T: Scalar> CmgnModel<T> {
    /// Assembles a model from its parts, checking shapes only.
    ///
    /// `biases` holds `b_0 … b_{L−1}`; `diag_scales`, when present, holds the
    /// effective diagonals `D_0 … D_L`. Their sign is not checked here: the
    /// initializer and the optimizer's reparameterization keep them
    /// nonnegative, and the property suites exist to catch models that are
    /// not.
    pub fn new(
        w: DenseMatrix<T>,
        biases: Vec<DenseVector<T>>,
        out_bias: DenseVector<T>,
        v: DenseMatrix<T>,
        activations: Vec<Activation>,
        diag_scales: Option<Vec<DenseVector<T>>>,
        gamma: f64,
    ) -> Result<Self> {
        let (h, n) = (w.rows(), w.cols());
        let layers = activations.len();
        if n == 0 || h == 0 || layers == 0 {
            return Err(Error::InvalidModel("cmgn needs n, h, L ≥ 1".into()));
        }
        if biases.len() != layers {
            return Err(Error::DimensionMismatch { expected: layers, found: biases.len() });
        }
        if let Some(b) = biases.iter().find(|b| b.len() != h) {
            return Err(Error::DimensionMismatch { expected: h, found: b.len() });
        }
        if out_bias.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: out_bias.len() });
        }
        if v.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.cols() });
        }
        if let Some(ds) = &diag_scales {
            if ds.len() != layers + 1 {
                return Err(Error::DimensionMismatch { expected: layers + 1, found: ds.len() });
            }
            if let Some(d) = ds.iter().find(|d| d.len() != h) {
                return Err(Error::DimensionMismatch { expected: h, found: d.len() });
            }
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidModel(format!("gamma must be finite and ≥ 0, got {gamma}")));
        }
        Ok(Self { w, biases, out_bias, v, activations, diag_scales, gamma })
    }

    pub fn n(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w.rows()
    }

    pub fn layers(&self) -> usize {
        self.activations.len()
    }

    pub fn rank(&self) -> usize {
        self.v.rows()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn w(&self) -> &DenseMatrix<T> {
        &self.w
    }

    pub fn v(&self) -> &DenseMatrix<T> {
        &self.v
    }

    pub fn biases(&self) -> &[DenseVector<T>] {
        &self.biases
    }

    pub fn out_bias(&self) -> &DenseVector<T> {
        &self.out_bias
    }

    pub fn diag_scales(&self) -> Option<&[DenseVector<T>]> {
        self.diag_scales.as_deref()
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden();
        let n = self.n();
        let diag = if self.diag_scales.is_some() { (self.layers() + 1) * h } else { 0 };
        h * n + self.layers() * h + n + self.rank() * n + diag
    }

    #[inline]
    fn scale(&self, layer: usize, i: usize) -> Option<T> {
        self.diag_scales.as_ref().map(|ds| ds[layer][i])
    }

    /// Output and, when `with_jacobian`, the input-Jacobian. `affine` is
    /// `VᵀV + γI`.
    pub(crate) fn eval(
        &self,
        affine: &DenseMatrix<T>,
        x: &[T],
        with_jacobian: bool,
    ) -> (Vec<T>, Option<DenseMatrix<T>>) {
        let u = self.w.matvec(x);
        let h = u.len();
        let layers = self.layers();

        let mut z: Vec<T> = (0..h)
            .map(|i| match self.scale(0, i) {
                Some(d) => d * u[i],
                None => u[i],
            } + self.biases[0][i])
            .collect();
        // dz_ℓ/du as a diagonal, accumulated in Horner form:
        // g_ℓ = D_ℓ·(1 + σ′_ℓ(z_{ℓ−1})·g_{ℓ−1}).
        let mut g: Vec<T> = if with_jacobian {
            (0..h).map(|i| self.scale(0, i).unwrap_or_else(T::one)).collect()
        } else {
            Vec::new()
        };

        for layer in 1..layers {
            let act = self.activations[layer - 1];
            let bias = &self.biases[layer];
            for i in 0..h {
                let zi = z[i];
                let pre = u[i] + act.first_s(zi);
                if with_jacobian {
                    let slope = T::one() + act.second_s(zi) * g[i];
                    g[i] = match self.scale(layer, i) {
                        Some(d) => d * slope,
                        None => slope,
                    };
                }
                z[i] = match self.scale(layer, i) {
                    Some(d) => d * pre,
                    None => pre,
                } + bias[i];
            }
        }

        let last = self.activations[layers - 1];
        let mut top: Vec<T> = Vec::with_capacity(h);
        for i in 0..h {
            let s = last.first_s(z[i]);
            top.push(match self.scale(layers, i) {
                Some(d) => d * s,
                None => s,
            });
            if with_jacobian {
                let m = last.second_s(z[i]) * g[i];
                g[i] = match self.scale(layers, i) {
                    Some(d) => d * m,
                    None => m,
                };
            }
        }

        let mut out = self.w.matvec_t(&top);
        let ax = affine.matvec(x);
        for ((o, a), b) in out.iter_mut().zip(ax).zip(self.out_bias.iter()) {
            *o += a + *b;
        }
        let jac = with_jacobian.then(|| {
            let mut j = self.w.weighted_gram(&g);
            j.add_assign_scaled(affine, T::one());
            j
        });
        (out, jac)
    }
}
