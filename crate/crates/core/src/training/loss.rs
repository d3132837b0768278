use std::f64::consts::PI;

use super::Batch;
use crate::error::{Error, Result};
use crate::linalg::{logdet_pd, DenseMatrix, DenseVector, Dual, Scalar};
use crate::mgn::{MgnModel, Prepared};

/// A per-sample loss the training engine can differentiate. Batch losses
/// are the mean over samples, summed in index order.
pub trait Objective {
    fn needs_targets(&self) -> bool {
        false
    }

    fn sample<T: Scalar>(&self, g: &Prepared<'_, T>, x: &[T], target: &[f64]) -> Result<T>;
}

/// Mean absolute error, averaged over output components.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mae;

impl Objective for Mae {
    fn needs_targets(&self) -> bool {
        true
    }

    fn sample<T: Scalar>(&self, g: &Prepared<'_, T>, x: &[T], target: &[f64]) -> Result<T> {
        let y = g.forward(x);
        if target.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), found: target.len() });
        }
        let mut acc = T::zero();
        for (yi, &ti) in y.iter().zip(target) {
            acc += (*yi - T::from_f64(ti)).abs();
        }
        Ok(acc.scale(1.0 / y.len() as f64))
    }
}

/// Negative log-likelihood of the data under the pushforward of a standard
/// normal prior, in nats.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowNll;

impl Objective for FlowNll {
    fn sample<T: Scalar>(&self, g: &Prepared<'_, T>, x: &[T], _target: &[f64]) -> Result<T> {
        let (y, j) = g.forward_jacobian(x);
        let n = y.len() as f64;
        let mut sq = T::zero();
        for &v in &y {
            sq += v * v;
        }
        Ok(T::from_f64(0.5 * n * (2.0 * PI).ln()) + sq.scale(0.5) - logdet_pd(&j)?)
    }
}

/// Flow NLL under a Gaussian prior `N(mean, L·Lᵀ)` instead of the standard
/// normal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTargetNll {
    mean: DenseVector,
    chol: DenseMatrix,
    constant: f64,
}

impl GaussianTargetNll {
    /// `chol` is the lower Cholesky factor of the target covariance.
    pub fn new(mean: DenseVector, chol: DenseMatrix) -> Self {
        let n = mean.len() as f64;
        let logdet: f64 = chol.diag().iter().map(|d| 2.0 * d.ln()).sum();
        Self { mean, chol, constant: 0.5 * n * (2.0 * PI).ln() + 0.5 * logdet }
    }
}

impl Objective for GaussianTargetNll {
    fn sample<T: Scalar>(&self, g: &Prepared<'_, T>, x: &[T], _target: &[f64]) -> Result<T> {
        let (y, j) = g.forward_jacobian(x);
        let n = y.len();
        if n != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), found: n });
        }
        // Forward substitution with a constant factor.
        let mut u: Vec<T> = Vec::with_capacity(n);
        let mut sq = T::zero();
        for i in 0..n {
            let row = self.chol.row(i);
            let mut s = y[i] - T::from_f64(self.mean[i]);
            for k in 0..i {
                s -= u[k].scale(row[k]);
            }
            let ui = s.scale(1.0 / row[i]);
            sq += ui * ui;
            u.push(ui);
        }
        Ok(T::from_f64(self.constant) + sq.scale(0.5) - logdet_pd(&j)?)
    }
}

fn batch_loss<T: Scalar, O: Objective>(model: &MgnModel<T>, objective: &O, batch: &Batch, xs: &[T]) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::Empty);
    }
    if batch.n != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), found: batch.n });
    }
    if objective.needs_targets() && batch.m == 0 {
        return Err(Error::InvalidSpec("loss needs targets but the data has none".into()));
    }
    let g = model.prepare();
    let n = batch.n;
    let mut acc = T::zero();
    for i in 0..batch.len() {
        let t = if batch.m > 0 { batch.target(i) } else { &[] };
        acc += objective.sample(&g, &xs[i * n..(i + 1) * n], t)?;
    }
    Ok(acc.scale(1.0 / batch.len() as f64))
}

/// Mean batch loss of `model`.
pub fn evaluate<O: Objective>(model: &MgnModel, objective: &O, batch: &Batch) -> Result<f64> {
    let v = batch_loss(model, objective, batch, &batch.inputs)?;
    if !v.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(v)
}

/// Mean batch loss and its gradient with respect to `flat`, the parameters
/// of `template` in [`MgnModel::flatten`] order. One forward-mode pass per
/// parameter.
pub fn param_grad_flat<O: Objective>(
    template: &MgnModel,
    flat: &[f64],
    objective: &O,
    batch: &Batch,
) -> Result<(f64, DenseVector)> {
    let xs: Vec<Dual> = batch.inputs.iter().map(|&v| Dual::constant(v)).collect();
    let mut params: Vec<Dual> = flat.iter().map(|&v| Dual::constant(v)).collect();
    let mut grad = Vec::with_capacity(flat.len());
    let mut value = f64::NAN;
    for p in 0..flat.len() {
        params[p].deriv = 1.0;
        let model = template.unflatten(&params)?;
        params[p].deriv = 0.0;
        let loss = batch_loss(&model, objective, batch, &xs)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        if p == 0 {
            value = loss.value;
        }
        grad.push(loss.deriv);
    }
    Ok((value, DenseVector::from_vec(grad)))
}

/// Gradient of the mean batch loss with respect to the model's flattened
/// parameters.
pub fn param_grad<O: Objective>(model: &MgnModel, objective: &O, batch: &Batch) -> Result<DenseVector> {
    let view = model.flatten();
    Ok(param_grad_flat(model, view.flat.as_slice(), objective, batch)?.1)
}

fn rows_to_batch(n: usize, rows: &[DenseVector]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len() * n);
    for r in rows {
        if r.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: r.len() });
        }
        out.extend_from_slice(r.as_slice());
    }
    Ok(out)
}

/// Mean over the batch of `(1/n)·Σᵢ |g(x)ᵢ − tᵢ|`.
pub fn mae_loss(model: &MgnModel, inputs: &[DenseVector], targets: &[DenseVector]) -> Result<f64> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: inputs.len(), found: targets.len() });
    }
    let n = model.n();
    let batch = Batch {
        n,
        m: n,
        inputs: rows_to_batch(n, inputs)?,
        targets: rows_to_batch(n, targets)?,
    };
    evaluate(model, &Mae, &batch)
}

/// Mean flow NLL of the batch in nats.
pub fn flow_nll(model: &MgnModel, batch: &[DenseVector]) -> Result<f64> {
    let n = model.n();
    evaluate(model, &FlowNll, &Batch::unlabeled(n, rows_to_batch(n, batch)?))
}
