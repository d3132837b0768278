use super::MgnModel;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, DenseVector};

pub const MAX_NEWTON_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 30;

fn residual(model: &MgnModel, x: &[f64], y: &[f64]) -> Vec<f64> {
    let prepared = model.prepare();
    prepared.forward(x).iter().zip(y).map(|(g, t)| g - t).collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|r| r * r).sum::<f64>().sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, r| m.max(r.abs()))
}

/// Solves `g(x) = y` by damped Newton iteration on the analytic Jacobian.
///
/// Requires `gamma > 0`, which makes the Jacobian positive definite
/// everywhere and the map a bijection. Starts from `y/(γ+1)`; each step is
/// halved (at most 30 times) until the residual norm decreases.
pub fn invert(model: &MgnModel, y: &DenseVector, tol: f64) -> Result<DenseVector> {
    if model.gamma() <= 0.0 {
        return Err(Error::InvalidModel("inversion requires gamma > 0".into()));
    }
    if y.len() != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), found: y.len() });
    }
    let y = y.as_slice();
    let prepared = model.prepare();
    let mut x: Vec<f64> = y.iter().map(|v| v / (model.gamma() + 1.0)).collect();
    let mut r = residual(model, &x, y);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if norm_inf(&r) <= tol {
            return Ok(DenseVector::from_vec(x));
        }
        let (_, jac) = prepared.forward_jacobian(&x);
        let step = solve_spd(&jac, &r)?;
        let current = norm2(&r);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(xi, si)| xi - t * si).collect();
            let tr = residual(model, &trial, y);
            if norm2(&tr) < current {
                accepted = Some((trial, tr));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((nx, nr)) => {
                x = nx;
                r = nr;
            }
            // No decrease at any step length: at machine precision.
            None => break,
        }
    }
    if norm_inf(&r) <= tol {
        return Ok(DenseVector::from_vec(x));
    }
    Err(Error::NoConvergence { iterations: MAX_NEWTON_ITERATIONS, residual: norm_inf(&r) })
}
