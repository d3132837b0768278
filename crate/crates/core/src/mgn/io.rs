//! Model files: a JSON document with metadata and named parameter arrays,
//! every float written with 17 significant digits so that reloading is
//! bit-exact.

use std::fs;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::ser::{Error as _, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{Architecture, CmgnModel, MgnModel, MmgnModel, MmgnModule};
use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};

pub const FORMAT_VERSION: u32 = 1;

/// An `f64` serialized in `%.16e` form.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Exact(f64);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom("non-finite parameter"));
        }
        RawValue::from_string(format!("{:.16e}", self.0))
            .map_err(S::Error::custom)?
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !v.is_finite() {
            return Err(de::Error::custom("non-finite parameter"));
        }
        Ok(Exact(v))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamArray {
    name: String,
    values: Vec<Exact>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    architecture: Architecture,
    n: usize,
    gamma: Exact,
    /// One per layer (C-MGN) or per module (M-MGN).
    activations: Vec<String>,
    rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diag_scales: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    widths: Option<Vec<usize>>,
    parameters: Vec<ParamArray>,
}

fn array(name: impl Into<String>, values: &[f64]) -> ParamArray {
    ParamArray { name: name.into(), values: values.iter().map(|&v| Exact(v)).collect() }
}

impl From<&MgnModel> for ModelFile {
    fn from(model: &MgnModel) -> Self {
        match model {
            MgnModel::Cmgn(m) => {
                let mut parameters = vec![array("W", m.w.as_slice())];
                for (l, b) in m.biases.iter().enumerate() {
                    parameters.push(array(format!("b_{l}"), b.as_slice()));
                }
                parameters.push(array("b_L", m.out_bias.as_slice()));
                parameters.push(array("V", m.v.as_slice()));
                if let Some(ds) = &m.diag_scales {
                    for (l, d) in ds.iter().enumerate() {
                        parameters.push(array(format!("d_{l}"), d.as_slice()));
                    }
                }
                ModelFile {
                    format_version: FORMAT_VERSION,
                    architecture: Architecture::Cmgn,
                    n: m.n(),
                    gamma: Exact(m.gamma),
                    activations: m.activations.iter().map(|a| a.name().to_string()).collect(),
                    rank: m.rank(),
                    hidden: Some(m.hidden()),
                    diag_scales: Some(m.diag_scales.is_some()),
                    widths: None,
                    parameters,
                }
            }
            MgnModel::Mmgn(m) => {
                let mut parameters = vec![array("a", m.a.as_slice()), array("V", m.v.as_slice())];
                for (k, module) in m.modules.iter().enumerate() {
                    parameters.push(array(format!("W_{}", k + 1), module.w.as_slice()));
                    parameters.push(array(format!("b_{}", k + 1), module.b.as_slice()));
                }
                ModelFile {
                    format_version: FORMAT_VERSION,
                    architecture: Architecture::Mmgn,
                    n: m.n(),
                    gamma: Exact(m.gamma),
                    activations: m.modules.iter().map(|k| k.activation.name().to_string()).collect(),
                    rank: m.rank(),
                    hidden: None,
                    diag_scales: None,
                    widths: Some(m.modules.iter().map(MmgnModule::width).collect()),
                    parameters,
                }
            }
        }
    }
}

struct Arrays<'a> {
    arrays: std::slice::Iter<'a, ParamArray>,
}

impl Arrays<'_> {
    fn next(&mut self, name: &str, len: usize) -> Result<Vec<f64>> {
        let a = self
            .arrays
            .next()
            .ok_or_else(|| Error::Format(format!("missing parameter array `{name}`")))?;
        if a.name != name {
            return Err(Error::Format(format!("expected parameter array `{name}`, found `{}`", a.name)));
        }
        if a.values.len() != len {
            return Err(Error::Format(format!(
                "parameter array `{name}` has {} entries, expected {len}",
                a.values.len()
            )));
        }
        Ok(a.values.iter().map(|e| e.0).collect())
    }

    fn finish(mut self) -> Result<()> {
        match self.arrays.next() {
            Some(extra) => Err(Error::Format(format!("unexpected parameter array `{}`", extra.name))),
            None => Ok(()),
        }
    }
}

fn format_err(e: Error) -> Error {
    match e {
        Error::Format(_) => e,
        other => Error::Format(other.to_string()),
    }
}

impl TryFrom<ModelFile> for MgnModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let n = file.n;
        if n == 0 || file.rank == 0 {
            return Err(Error::Format("n and rank must be ≥ 1".into()));
        }
        let acts = file
            .activations
            .iter()
            .map(|name| Activation::get(name))
            .collect::<Result<Vec<_>>>()
            .map_err(format_err)?;
        let mut arrays = Arrays { arrays: file.parameters.iter() };
        let model = match file.architecture {
            Architecture::Cmgn => {
                let h = file.hidden.ok_or_else(|| Error::Format("cmgn file lacks `hidden`".into()))?;
                let layers = acts.len();
                let w = DenseMatrix::from_vec(h, n, arrays.next("W", h * n)?);
                let biases = (0..layers)
                    .map(|l| arrays.next(&format!("b_{l}"), h).map(DenseVector::from_vec))
                    .collect::<Result<Vec<_>>>()?;
                let out_bias = DenseVector::from_vec(arrays.next("b_L", n)?);
                let v = DenseMatrix::from_vec(file.rank, n, arrays.next("V", file.rank * n)?);
                let diag = match file.diag_scales.unwrap_or(false) {
                    true => Some(
                        (0..=layers)
                            .map(|l| arrays.next(&format!("d_{l}"), h).map(DenseVector::from_vec))
                            .collect::<Result<Vec<_>>>()?,
                    ),
                    false => None,
                };
                MgnModel::Cmgn(CmgnModel::new(w, biases, out_bias, v, acts, diag, file.gamma.0).map_err(format_err)?)
            }
            Architecture::Mmgn => {
                let widths = file.widths.clone().ok_or_else(|| Error::Format("mmgn file lacks `widths`".into()))?;
                if widths.len() != acts.len() {
                    return Err(Error::Format("one activation per module required".into()));
                }
                let a = DenseVector::from_vec(arrays.next("a", n)?);
                let v = DenseMatrix::from_vec(file.rank, n, arrays.next("V", file.rank * n)?);
                let modules = widths
                    .iter()
                    .zip(&acts)
                    .enumerate()
                    .map(|(k, (&h, &act))| {
                        let w = DenseMatrix::from_vec(h, n, arrays.next(&format!("W_{}", k + 1), h * n)?);
                        let b = DenseVector::from_vec(arrays.next(&format!("b_{}", k + 1), h)?);
                        MmgnModule::new(w, b, act).map_err(format_err)
                    })
                    .collect::<Result<Vec<_>>>()?;
                MgnModel::Mmgn(MmgnModel::new(a, v, modules, file.gamma.0).map_err(format_err)?)
            }
        };
        arrays.finish()?;
        Ok(model)
    }
}

pub fn model_to_string(model: &MgnModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from(model))?)
}

pub fn model_from_str(text: &str) -> Result<MgnModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    MgnModel::try_from(file)
}

pub fn save_model(model: &MgnModel, path: impl AsRef<Path>) -> Result<()> {
    let mut text = model_to_string(model)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MgnModel> {
    model_from_str(&fs::read_to_string(path)?)
}
