//! Browser bindings for three interactive views: training a monotone
//! network on the quartic gradient field, probing its Jacobian at a point,
//! and training a Gaussian flow whose test points are drawn before and
//! after transport.

use mgn::gradfield::true_gradient_at;
use mgn::linalg::sym_eigen;
use mgn::mgn::{init_params, CmgnSpec, OneOrMany};
use mgn::rng::substream;
use mgn::training::{evaluate, Batch, FlowNll, InMemory, Labeled, Mae, Sampler, TrainConfig, Trainer, UnitSquare};
use mgn::transport::{bures_wasserstein_cost, entropy_bound, gaussian_sample_with, random_gaussian, GaussianModel};
use mgn::{DenseVector, Error, MgnModel, ModelSpec, Result};
use wasm_bindgen::prelude::*;

type Field = Labeled<UnitSquare, fn(&[f64], &mut [f64])>;

fn label(x: &[f64], t: &mut [f64]) {
    t.copy_from_slice(&true_gradient_at(x));
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Online fit of the quartic gradient field with fresh batches.
#[wasm_bindgen]
pub struct FieldTrainer {
    trainer: Trainer,
    data: Field,
    model: MgnModel,
    cursor: usize,
    batch: usize,
}

impl FieldTrainer {
    pub fn create(architecture: &str, seed: u32, learning_rate: f64, batch: usize) -> Result<Self> {
        let spec = match architecture {
            "cmgn" => ModelSpec::reference_cmgn(),
            "mmgn" => ModelSpec::reference_mmgn(),
            other => return Err(Error::InvalidSpec(format!("unknown architecture {other:?}"))),
        };
        let model = init_params(&spec, seed as u64)?;
        let cfg = TrainConfig { learning_rate, batch_size: batch, seed: seed as u64, ..TrainConfig::default() };
        let trainer = Trainer::new(model.clone(), cfg)?;
        let data = Labeled { inner: UnitSquare { seed: seed as u64, count: usize::MAX }, target_dim: 2, label: label as fn(&[f64], &mut [f64]) };
        Ok(Self { trainer, data, model, cursor: 0, batch })
    }

    pub fn current(&self) -> &MgnModel {
        &self.model
    }
}

#[wasm_bindgen]
impl FieldTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(architecture: &str, seed: u32, learning_rate: f64, batch: usize) -> std::result::Result<FieldTrainer, JsError> {
        Self::create(architecture, seed, learning_rate, batch).map_err(js)
    }

    /// Runs `steps` Adam steps and returns the mean batch loss.
    pub fn train(&mut self, steps: u32) -> std::result::Result<f64, JsError> {
        let mut total = 0.0;
        for _ in 0..steps {
            let indices: Vec<usize> = (self.cursor..self.cursor + self.batch).collect();
            self.cursor += self.batch;
            let b = Batch::gather(&self.data, &indices);
            total += self.trainer.step(&Mae, &b).map_err(js)?;
        }
        self.model = self.trainer.model();
        Ok(total / steps.max(1) as f64)
    }

    pub fn steps(&self) -> f64 {
        self.trainer.steps() as f64
    }

    pub fn param_count(&self) -> usize {
        self.model.param_count()
    }

    /// `size × size` lattice over the unit square, row-major with `x₂`
    /// outer; four values per point: predicted `g₁, g₂`, true `∇f₁, ∇f₂`.
    pub fn field(&self, size: usize) -> Vec<f64> {
        field(&self.model, size)
    }

    pub fn mse_db(&self, size: usize) -> f64 {
        let f = field(&self.model, size);
        let mse = f.chunks(4).map(|c| (c[0] - c[2]).powi(2) + (c[1] - c[3]).powi(2)).sum::<f64>() / (size * size) as f64;
        mgn::gradfield::mse_db(mse)
    }

    /// Jacobian at `(x₁, x₂)` as `[j₁₁, j₁₂, j₂₁, j₂₂, λ_min, λ_max]`.
    pub fn probe(&self, x1: f64, x2: f64) -> std::result::Result<Vec<f64>, JsError> {
        probe(&self.model, x1, x2).map_err(js)
    }
}

fn field(model: &MgnModel, size: usize) -> Vec<f64> {
    let prepared = model.prepare();
    let s = size.saturating_sub(1).max(1) as f64;
    let mut out = Vec::with_capacity(4 * size * size);
    for j in 0..size {
        for i in 0..size {
            let x = [i as f64 / s, j as f64 / s];
            let g = prepared.forward(&x);
            let t = true_gradient_at(&x);
            out.extend_from_slice(&[g[0], g[1], t[0], t[1]]);
        }
    }
    out
}

fn probe(model: &MgnModel, x1: f64, x2: f64) -> Result<Vec<f64>> {
    let j = model.jacobian(&DenseVector::from_vec(vec![x1, x2]))?;
    let e = sym_eigen(&j)?;
    let mut out = j.as_slice().to_vec();
    out.extend_from_slice(&[e.min(), e.max()]);
    Ok(out)
}

/// A C-MGN flow trained by maximum likelihood on a random 2-D Gaussian.
#[wasm_bindgen]
pub struct FlowTrainer {
    trainer: Trainer,
    data: InMemory,
    test: Vec<DenseVector>,
    gaussian: GaussianModel,
    model: MgnModel,
}

impl FlowTrainer {
    pub fn create(seed: u32, samples: usize) -> Result<Self> {
        let seed = seed as u64;
        let gaussian = random_gaussian(2, (0.25, 4.0), &mut substream(seed, "gaussian"));
        let train = gaussian_sample_with(&gaussian, samples, &mut substream(seed, "data"));
        let test = gaussian_sample_with(&gaussian, 400, &mut substream(seed, "test"));
        let spec = ModelSpec::Cmgn(CmgnSpec {
            n: Some(2),
            hidden: 4,
            layers: 2,
            activation: OneOrMany::One("tanh_only".into()),
            rank: Some(2),
            gamma: 0.1,
            diag_scales: false,
        });
        let model = init_params(&spec, seed)?;
        let cfg = TrainConfig { learning_rate: 1e-2, batch_size: 128, seed, ..TrainConfig::default() };
        let trainer = Trainer::new(model.clone(), cfg)?;
        let data = InMemory::unlabeled(2, train.iter().flat_map(|x| x.iter().copied()).collect());
        Ok(Self { trainer, data, test, gaussian, model })
    }

    pub fn current(&self) -> &MgnModel {
        &self.model
    }
}

#[wasm_bindgen]
impl FlowTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, samples: usize) -> std::result::Result<FlowTrainer, JsError> {
        Self::create(seed, samples).map_err(js)
    }

    /// One pass over the training draws; returns its mean NLL.
    pub fn epoch(&mut self) -> std::result::Result<f64, JsError> {
        let loss = self.trainer.epoch(&FlowNll, &self.data).map_err(js)?;
        self.model = self.trainer.model();
        Ok(loss)
    }

    pub fn steps(&self) -> f64 {
        self.trainer.steps() as f64
    }

    /// Test draws and their images, four values per point: `x₁, x₂, y₁, y₂`.
    pub fn points(&self) -> Vec<f64> {
        let prepared = self.model.prepare();
        self.test
            .iter()
            .flat_map(|x| {
                let y = prepared.forward(x.as_slice());
                [x[0], x[1], y[0], y[1]]
            })
            .collect()
    }

    /// `[test NLL, transport cost, optimal cost, NLL lower bound]`.
    pub fn stats(&self) -> std::result::Result<Vec<f64>, JsError> {
        self.stats_inner().map_err(js)
    }
}

impl FlowTrainer {
    pub fn stats_inner(&self) -> Result<Vec<f64>> {
        let flat: Vec<f64> = self.test.iter().flat_map(|x| x.iter().copied()).collect();
        let nll = evaluate(&self.model, &FlowNll, &Batch::unlabeled(2, flat))?;
        let mapped = self.model.forward_batch(&self.test)?;
        let cost = self
            .test
            .iter()
            .zip(&mapped)
            .map(|(x, y)| x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>()
            / self.test.len() as f64;
        let optimal = bures_wasserstein_cost(&self.gaussian, &GaussianModel::standard(2))?;
        Ok(vec![nll, cost, optimal, entropy_bound(&self.gaussian)])
    }

    pub fn train_len(&self) -> usize {
        self.data.len()
    }
}
