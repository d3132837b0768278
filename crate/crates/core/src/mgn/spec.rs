use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{CmgnModel, MgnModel, MmgnModel, MmgnModule};
use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Cmgn,
    Mmgn,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Cmgn => "cmgn",
            Architecture::Mmgn => "mmgn",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A single value broadcast to every layer/module, or one per layer/module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, count: usize, what: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); count]),
            OneOrMany::Many(vs) if vs.len() == count => Ok(vs.clone()),
            OneOrMany::Many(vs) => Err(Error::InvalidSpec(format!(
                "expected {count} {what} entries, got {}",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmgnSpec {
    /// Input dimension; experiments fill it in when absent.
    #[serde(default)]
    pub n: Option<usize>,
    pub hidden: usize,
    pub layers: usize,
    pub activation: OneOrMany<String>,
    /// Rows of `V`; defaults to `n`.
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub diag_scales: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmgnSpec {
    #[serde(default)]
    pub n: Option<usize>,
    /// Width `h_k` of each module; the module count is its length.
    pub widths: Vec<usize>,
    pub activation: OneOrMany<String>,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub gamma: f64,
}

/// Architecture and hyperparameters of a model to initialize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "lowercase")]
pub enum ModelSpec {
    Cmgn(CmgnSpec),
    Mmgn(MmgnSpec),
}

impl ModelSpec {
    pub fn architecture(&self) -> Architecture {
        match self {
            ModelSpec::Cmgn(_) => Architecture::Cmgn,
            ModelSpec::Mmgn(_) => Architecture::Mmgn,
        }
    }

    pub fn n(&self) -> Option<usize> {
        match self {
            ModelSpec::Cmgn(s) => s.n,
            ModelSpec::Mmgn(s) => s.n,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            ModelSpec::Cmgn(s) => s.gamma,
            ModelSpec::Mmgn(s) => s.gamma,
        }
    }

    /// Fixes the input dimension, failing if the spec already names a
    /// different one.
    pub fn with_n(mut self, n: usize) -> Result<Self> {
        let slot = match &mut self {
            ModelSpec::Cmgn(s) => &mut s.n,
            ModelSpec::Mmgn(s) => &mut s.n,
        };
        match *slot {
            Some(existing) if existing != n => Err(Error::InvalidSpec(format!(
                "model dimension {existing} does not match experiment dimension {n}"
            ))),
            _ => {
                *slot = Some(n);
                Ok(self)
            }
        }
    }

    /// The C-MGN configuration with 14 trainable parameters for n = 2.
    pub fn reference_cmgn() -> Self {
        ModelSpec::Cmgn(CmgnSpec {
            n: Some(2),
            hidden: 2,
            layers: 2,
            activation: OneOrMany::One("tanh_only".into()),
            rank: Some(2),
            gamma: 0.0,
            diag_scales: false,
        })
    }

    /// The M-MGN configuration with 22 trainable parameters for n = 2.
    pub fn reference_mmgn() -> Self {
        ModelSpec::Mmgn(MmgnSpec {
            n: Some(2),
            widths: vec![1; 6],
            activation: OneOrMany::One("softplus_sigmoid".into()),
            rank: Some(1),
            gamma: 0.0,
        })
    }
}

fn positive(value: usize, what: &str) -> Result<usize> {
    if value == 0 {
        return Err(Error::InvalidSpec(format!("{what} must be ≥ 1")));
    }
    Ok(value)
}

fn check_gamma(gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidSpec(format!("gamma must be finite and ≥ 0, got {gamma}")));
    }
    Ok(gamma)
}

fn activations(names: &OneOrMany<String>, count: usize, what: &str) -> Result<Vec<Activation>> {
    names.expand(count, what)?.iter().map(|name| Activation::get(name)).collect()
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> DenseMatrix {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

/// `(1/√n)·I` padded with zero rows or truncated to `rank` rows.
fn scaled_identity(rank: usize, n: usize) -> DenseMatrix {
    let c = 1.0 / (n as f64).sqrt();
    let mut v = DenseMatrix::zeros(rank, n);
    for i in 0..rank.min(n) {
        v[(i, i)] = c;
    }
    v
}

/// Initializes a model: `W` entries uniform on `±√(1/n)`, biases zero,
/// `V = (1/√n)·I` (padded/truncated), diagonal scalings one. Deterministic
/// in `seed`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<MgnModel> {
    let n = positive(spec.n().ok_or_else(|| Error::InvalidSpec("input dimension n is unset".into()))?, "n")?;
    let bound = (1.0 / n as f64).sqrt();
    let mut rng = rng::substream(seed, "init");
    match spec {
        ModelSpec::Cmgn(s) => {
            let h = positive(s.hidden, "hidden")?;
            let layers = positive(s.layers, "layers")?;
            let acts = activations(&s.activation, layers, "activation")?;
            let rank = positive(s.rank.unwrap_or(n), "rank")?;
            let w = uniform_matrix(h, n, bound, &mut rng);
            let biases = vec![DenseVector::zeros(h); layers];
            let diag = s.diag_scales.then(|| vec![DenseVector::filled(h, 1.0); layers + 1]);
            let model = CmgnModel::new(
                w,
                biases,
                DenseVector::zeros(n),
                scaled_identity(rank, n),
                acts,
                diag,
                check_gamma(s.gamma)?,
            )?;
            Ok(MgnModel::Cmgn(model))
        }
        ModelSpec::Mmgn(s) => {
            let acts = activations(&s.activation, s.widths.len(), "activation")?;
            if let Some(bad) = acts.iter().find(|a| !a.prop2_eligible()) {
                return Err(Error::InvalidSpec(format!(
                    "{bad} lacks a convex nonnegative potential; M-MGN needs logcosh_tanh or softplus_sigmoid"
                )));
            }
            let rank = positive(s.rank.unwrap_or(n), "rank")?;
            let modules = s
                .widths
                .iter()
                .zip(acts)
                .map(|(&h, act)| {
                    let h = positive(h, "module width")?;
                    MmgnModule::new(uniform_matrix(h, n, bound, &mut rng), DenseVector::zeros(h), act)
                })
                .collect::<Result<Vec<_>>>()?;
            let model = MmgnModel::new(DenseVector::zeros(n), scaled_identity(rank, n), modules, check_gamma(s.gamma)?)?;
            Ok(MgnModel::Mmgn(model))
        }
    }
}

/// A model with random structure and random (not initializer-style)
/// parameters, for property checks. Biases and diagonal scalings are
/// nonzero so that every term of the architecture is exercised.
pub fn random_model(architecture: Architecture, n: usize, rng: &mut impl Rng) -> MgnModel {
    let normal = |rng: &mut dyn rand::RngCore, scale: f64| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    };
    let gamma = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.01..1.0) };
    let rank = rng.random_range(1..=n + 1);
    let v = DenseMatrix::from_vec(rank, n, (0..rank * n).map(|_| normal(rng, 0.5)).collect());
    let vector = |rng: &mut dyn rand::RngCore, len: usize, scale: f64| {
        DenseVector::from_vec((0..len).map(|_| normal(rng, scale)).collect())
    };
    match architecture {
        Architecture::Cmgn => {
            let h = rng.random_range(1..=6);
            let layers = rng.random_range(1..=3);
            let acts = (0..layers).map(|_| Activation::ALL[rng.random_range(0..Activation::ALL.len())]).collect();
            let w = DenseMatrix::from_vec(h, n, (0..h * n).map(|_| normal(rng, 1.0)).collect());
            let biases = (0..layers).map(|_| vector(rng, h, 0.5)).collect();
            let out_bias = vector(rng, n, 1.0);
            let diag = rng.random_bool(0.5).then(|| {
                (0..=layers)
                    .map(|_| DenseVector::from_vec((0..h).map(|_| rng.random_range(0.05..2.0)).collect()))
                    .collect()
            });
            MgnModel::Cmgn(CmgnModel::new(w, biases, out_bias, v, acts, diag, gamma).expect("consistent shapes"))
        }
        Architecture::Mmgn => {
            let k = rng.random_range(0..=3);
            let eligible = [Activation::LogcoshTanh, Activation::SoftplusSigmoid];
            let modules = (0..k)
                .map(|_| {
                    let h = rng.random_range(1..=5);
                    let w = DenseMatrix::from_vec(h, n, (0..h * n).map(|_| normal(rng, 0.7)).collect());
                    let b = vector(rng, h, 0.5);
                    MmgnModule::new(w, b, eligible[rng.random_range(0..2)]).expect("eligible family")
                })
                .collect();
            let a = vector(rng, n, 1.0);
            MgnModel::Mmgn(MmgnModel::new(a, v, modules, gamma).expect("consistent shapes"))
        }
    }
}
