use rand::Rng;

use crate::rng::substream_at;

/// Indexed, deterministic training data. Record `i` is the same on every
/// call, so epochs can revisit a dataset without storing it.
pub trait Sampler {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn input_dim(&self) -> usize;

    /// Zero for unlabeled data.
    fn target_dim(&self) -> usize {
        0
    }

    /// Writes record `index` into `input` and, when labeled, `target`.
    fn fill(&self, index: usize, input: &mut [f64], target: &mut [f64]);
}

/// Uniform points on `[0, 1]²`, generated from the record index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitSquare {
    pub seed: u64,
    pub count: usize,
}

impl Sampler for UnitSquare {
    fn len(&self) -> usize {
        self.count
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn fill(&self, index: usize, input: &mut [f64], _target: &mut [f64]) {
        // Two f64 draws consume four 32-bit words.
        let mut rng = substream_at(self.seed, "data", index as u64, 4);
        input[0] = rng.random::<f64>();
        input[1] = rng.random::<f64>();
    }
}

/// Wraps a sampler with targets computed from each input.
pub struct Labeled<S, F> {
    pub inner: S,
    pub target_dim: usize,
    pub label: F,
}

impl<S: Sampler, F: Fn(&[f64], &mut [f64])> Sampler for Labeled<S, F> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn target_dim(&self) -> usize {
        self.target_dim
    }

    fn fill(&self, index: usize, input: &mut [f64], target: &mut [f64]) {
        self.inner.fill(index, input, &mut []);
        (self.label)(input, target);
    }
}

/// Records held in memory, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InMemory {
    input_dim: usize,
    target_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl InMemory {
    pub fn unlabeled(input_dim: usize, inputs: Vec<f64>) -> Self {
        assert!(input_dim > 0 && inputs.len() % input_dim == 0, "ragged inputs");
        Self { input_dim, target_dim: 0, inputs, targets: Vec::new() }
    }

    pub fn labeled(input_dim: usize, inputs: Vec<f64>, target_dim: usize, targets: Vec<f64>) -> Self {
        assert!(input_dim > 0 && inputs.len() % input_dim == 0, "ragged inputs");
        assert_eq!(inputs.len() / input_dim * target_dim, targets.len(), "target count");
        Self { input_dim, target_dim, inputs, targets }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(1, Vec::len);
        Self::unlabeled(d, rows.iter().flatten().copied().collect())
    }
}

impl Sampler for InMemory {
    fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn target_dim(&self) -> usize {
        self.target_dim
    }

    fn fill(&self, index: usize, input: &mut [f64], target: &mut [f64]) {
        let d = self.input_dim;
        input.copy_from_slice(&self.inputs[index * d..(index + 1) * d]);
        let m = self.target_dim;
        if m > 0 {
            target.copy_from_slice(&self.targets[index * m..(index + 1) * m]);
        }
    }
}

/// A gathered minibatch, row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub n: usize,
    pub m: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn gather(data: &dyn Sampler, indices: &[usize]) -> Self {
        let (n, m) = (data.input_dim(), data.target_dim());
        let mut inputs = vec![0.0; indices.len() * n];
        let mut targets = vec![0.0; indices.len() * m];
        for (row, &i) in indices.iter().enumerate() {
            data.fill(i, &mut inputs[row * n..(row + 1) * n], &mut targets[row * m..(row + 1) * m]);
        }
        Self { n, m, inputs, targets }
    }

    pub fn unlabeled(n: usize, inputs: Vec<f64>) -> Self {
        Self { n, m: 0, inputs, targets: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.n.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n..(i + 1) * self.n]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.m..(i + 1) * self.m]
    }
}
