use super::{CmgnModel, MgnModel, MmgnModel, MmgnModule};
use crate::activations::{logistic, softplus, softplus_inv};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, Scalar};

/// A named run of entries inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// All trainable entries of a model as one flat vector.
///
/// Diagonal scalings appear as unconstrained raw values; the model holds
/// `softplus(raw)`, which keeps them nonnegative under any update.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamView {
    pub flat: DenseVector,
    pub layout: Vec<Segment>,
}

impl ParamView {
    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.layout.iter().find(|s| s.name == name)
    }

    pub fn segment_values(&self, name: &str) -> Option<&[f64]> {
        self.segment(name).map(|s| &self.flat.as_slice()[s.offset..s.offset + s.len])
    }
}

#[derive(Default)]
struct Writer {
    flat: Vec<f64>,
    layout: Vec<Segment>,
}

impl Writer {
    fn push(&mut self, name: impl Into<String>, values: impl IntoIterator<Item = f64>) {
        let offset = self.flat.len();
        self.flat.extend(values);
        self.layout.push(Segment { name: name.into(), offset, len: self.flat.len() - offset });
    }

    fn finish(self) -> ParamView {
        ParamView { flat: DenseVector::from_vec(self.flat), layout: self.layout }
    }
}

struct Reader<'a, T> {
    flat: &'a [T],
    pos: usize,
}

impl<T: Scalar> Reader<'_, T> {
    fn take(&mut self, len: usize) -> Result<&[T]> {
        let end = self.pos + len;
        if end > self.flat.len() {
            return Err(Error::DimensionMismatch { expected: end, found: self.flat.len() });
        }
        let s = &self.flat[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn vector(&mut self, len: usize) -> Result<DenseVector<T>> {
        Ok(DenseVector::from_vec(self.take(len)?.to_vec()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DenseMatrix<T>> {
        Ok(DenseMatrix::from_vec(rows, cols, self.take(rows * cols)?.to_vec()))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.flat.len() {
            return Err(Error::DimensionMismatch { expected: self.pos, found: self.flat.len() });
        }
        Ok(())
    }
}

impl MgnModel<f64> {
    pub fn flatten(&self) -> ParamView {
        let mut w = Writer::default();
        match self {
            MgnModel::Cmgn(m) => {
                let layers = m.layers();
                w.push("W", m.w.as_slice().iter().copied());
                for (l, b) in m.biases.iter().enumerate() {
                    w.push(format!("b_{l}"), b.iter().copied());
                }
                w.push("b_L", m.out_bias.iter().copied());
                w.push("V", m.v.as_slice().iter().copied());
                if let Some(ds) = &m.diag_scales {
                    for (l, d) in ds.iter().enumerate().take(layers + 1) {
                        w.push(format!("raw_d_{l}"), d.iter().map(|&s| softplus_inv(s)));
                    }
                }
            }
            MgnModel::Mmgn(m) => {
                w.push("a", m.a.iter().copied());
                w.push("V", m.v.as_slice().iter().copied());
                for (k, module) in m.modules.iter().enumerate() {
                    w.push(format!("W_{}", k + 1), module.w.as_slice().iter().copied());
                    w.push(format!("b_{}", k + 1), module.b.iter().copied());
                }
            }
        }
        w.finish()
    }

    /// A model with this one's structure and the given flat parameters, in
    /// the order [`flatten`](Self::flatten) produces.
    pub fn unflatten<T: Scalar>(&self, flat: &[T]) -> Result<MgnModel<T>> {
        let mut r = Reader { flat, pos: 0 };
        let model = match self {
            MgnModel::Cmgn(m) => {
                let (h, n) = (m.hidden(), m.n());
                let w = r.matrix(h, n)?;
                let biases = (0..m.layers()).map(|_| r.vector(h)).collect::<Result<Vec<_>>>()?;
                let out_bias = r.vector(n)?;
                let v = r.matrix(m.rank(), n)?;
                let diag_scales = match m.diag_scales {
                    Some(_) => Some(
                        (0..=m.layers())
                            .map(|_| {
                                let raw = r.take(h)?;
                                Ok(DenseVector::from_vec(
                                    raw.iter().map(|&t| t.lift(softplus(t.value()), logistic(t.value()))).collect(),
                                ))
                            })
                            .collect::<Result<Vec<_>>>()?,
                    ),
                    None => None,
                };
                MgnModel::Cmgn(CmgnModel {
                    w,
                    biases,
                    out_bias,
                    v,
                    activations: m.activations.clone(),
                    diag_scales,
                    gamma: m.gamma,
                })
            }
            MgnModel::Mmgn(m) => {
                let n = m.n();
                let a = r.vector(n)?;
                let v = r.matrix(m.rank(), n)?;
                let modules = m
                    .modules
                    .iter()
                    .map(|module| {
                        let w = r.matrix(module.width(), n)?;
                        let b = r.vector(module.width())?;
                        Ok(MmgnModule { w, b, activation: module.activation })
                    })
                    .collect::<Result<Vec<_>>>()?;
                MgnModel::Mmgn(MmgnModel { a, v, modules, gamma: m.gamma })
            }
        };
        r.finish()?;
        Ok(model)
    }

    /// Same structure with every parameter lifted to `T` as a constant.
    pub fn lift<T: Scalar>(&self) -> MgnModel<T> {
        match self {
            MgnModel::Cmgn(m) => MgnModel::Cmgn(CmgnModel {
                w: m.w.lift(),
                biases: m.biases.iter().map(DenseVector::lift).collect(),
                out_bias: m.out_bias.lift(),
                v: m.v.lift(),
                activations: m.activations.clone(),
                diag_scales: m.diag_scales.as_ref().map(|ds| ds.iter().map(DenseVector::lift).collect()),
                gamma: m.gamma,
            }),
            MgnModel::Mmgn(m) => MgnModel::Mmgn(MmgnModel {
                a: m.a.lift(),
                v: m.v.lift(),
                modules: m
                    .modules
                    .iter()
                    .map(|module| MmgnModule { w: module.w.lift(), b: module.b.lift(), activation: module.activation })
                    .collect(),
                gamma: m.gamma,
            }),
        }
    }
}
