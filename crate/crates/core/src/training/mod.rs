//! Training: forward-mode parameter gradients, losses, Adam and the epoch
//! loop.

mod adam;
mod data;
mod loss;

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use data::{Batch, InMemory, Labeled, Sampler, UnitSquare};
pub use loss::{evaluate, flow_nll, mae_loss, param_grad, param_grad_flat, FlowNll, GaussianTargetNll, Mae, Objective};

use crate::error::{Error, Result};
use crate::export::{Cell, Csv};
use crate::mgn::MgnModel;
use crate::rng::{substream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mae,
    FlowNll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            epochs: 10,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
            loss: LossKind::Mae,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidSpec(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

/// What a training run did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch loss per completed epoch, taken before each update.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub param_count: usize,
    pub wall_seconds: f64,
    /// Experiment-specific metrics, filled in by the caller.
    pub metrics: BTreeMap<String, f64>,
    pub config: TrainConfig,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `epoch,loss`, epochs counted from 1.
    pub fn loss_csv(&self) -> Csv {
        let mut csv = Csv::new(&["epoch", "loss"]);
        for (e, &l) in self.epoch_losses.iter().enumerate() {
            csv.push(vec![Cell::from(e + 1), Cell::from(l)]);
        }
        csv
    }
}

/// A run aborted partway. `model` and `report` cover the completed steps.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub model: MgnModel,
    pub report: TrainReport,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training failed after {} steps: {}", self.report.steps, self.error)
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

struct Clock(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Clock {
    fn start() -> Self {
        Clock(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

/// Step-by-step optimizer state over a model's flattened parameters.
pub struct Trainer {
    template: MgnModel,
    params: Vec<f64>,
    adam: AdamState,
    cfg: TrainConfig,
    shuffle: StreamRng,
    order: Vec<usize>,
    cursor: usize,
    steps: u64,
}

impl Trainer {
    pub fn new(model: MgnModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = model.flatten().flat.into_vec();
        let adam = AdamState::new(params.len());
        let shuffle = substream(cfg.seed, "shuffle");
        Ok(Self { template: model, params, adam, cfg, shuffle, order: Vec::new(), cursor: 0, steps: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// The current model. Before the first step this is the model passed
    /// in, unchanged.
    pub fn model(&self) -> MgnModel {
        if self.steps == 0 {
            return self.template.clone();
        }
        self.template.unflatten(&self.params).expect("layout fixed at construction")
    }

    /// One Adam step on `batch`; returns the loss before the update.
    pub fn step<O: Objective>(&mut self, objective: &O, batch: &Batch) -> Result<f64> {
        let (loss, grad) = param_grad_flat(&self.template, &self.params, objective, batch)?;
        adam_step(&mut self.params, grad.as_slice(), &mut self.adam, &self.cfg);
        self.steps += 1;
        Ok(loss)
    }

    /// Steps through one shuffled pass over `data`: `len / batch_size`
    /// steps, at least one. Returns the mean step loss.
    pub fn epoch<O: Objective>(&mut self, objective: &O, data: &dyn Sampler) -> Result<f64> {
        let len = data.len();
        if len == 0 {
            return Err(Error::Empty);
        }
        let batch = self.cfg.batch_size.min(len);
        let steps = len / batch;
        let mut total = 0.0;
        for _ in 0..steps {
            total += self.next_step(objective, data, batch)?;
        }
        Ok(total / steps as f64)
    }

    fn next_step<O: Objective>(&mut self, objective: &O, data: &dyn Sampler, batch: usize) -> Result<f64> {
        if self.order.len() != data.len() || self.cursor + batch > self.order.len() {
            self.order = (0..data.len()).collect();
            self.order.shuffle(&mut self.shuffle);
            self.cursor = 0;
        }
        let b = Batch::gather(data, &self.order[self.cursor..self.cursor + batch]);
        self.cursor += batch;
        self.step(objective, &b)
    }
}

/// Trains `model` for `cfg.epochs` epochs over `data`, calling `on_epoch`
/// with the epoch index, its mean loss and the model after it.
pub fn train_with<O: Objective>(
    model: &MgnModel,
    data: &dyn Sampler,
    objective: &O,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, &MgnModel),
) -> std::result::Result<(MgnModel, TrainReport), TrainFailure> {
    let clock = Clock::start();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        steps: 0,
        param_count: model.param_count(),
        wall_seconds: 0.0,
        metrics: BTreeMap::new(),
        config: cfg.clone(),
    };
    let fail = |error, model: MgnModel, mut report: TrainReport| {
        report.wall_seconds = clock.seconds();
        TrainFailure { error, model, report }
    };
    if data.input_dim() != model.n() {
        let e = Error::DimensionMismatch { expected: model.n(), found: data.input_dim() };
        return Err(fail(e, model.clone(), report));
    }
    let mut trainer = match Trainer::new(model.clone(), cfg.clone()) {
        Ok(t) => t,
        Err(e) => return Err(fail(e, model.clone(), report)),
    };
    for e in 0..cfg.epochs {
        let result = trainer.epoch(objective, data);
        report.steps = trainer.steps();
        match result {
            Ok(loss) => {
                report.epoch_losses.push(loss);
                on_epoch(e, loss, &trainer.model());
            }
            Err(err) => return Err(fail(err, trainer.model(), report)),
        }
    }
    report.wall_seconds = clock.seconds();
    Ok((trainer.model(), report))
}

/// Trains with the loss named in `cfg`.
pub fn train(
    model: &MgnModel,
    data: &dyn Sampler,
    cfg: &TrainConfig,
) -> std::result::Result<(MgnModel, TrainReport), TrainFailure> {
    match cfg.loss {
        LossKind::Mae => train_with(model, data, &Mae, cfg, |_, _, _| {}),
        LossKind::FlowNll => train_with(model, data, &FlowNll, cfg, |_, _, _| {}),
    }
}

#[cfg(test)]
mod tests;
