//! Gaussian models, the whitening transform, closed-form transport and
//! divergence oracles, and the Gaussian coupling experiment.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{Cell, Csv};
use crate::linalg::{cholesky, logdet_pd, solve_lower, solve_spd, sqrt_psd, DenseMatrix, DenseVector, SYMMETRY_TOL};
use crate::mgn::MgnModel;
use crate::rng::substream;
use crate::training::{evaluate, train_with, Batch, FlowNll, InMemory, TrainConfig, TrainFailure, TrainReport};

/// A multivariate normal with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    mean: DenseVector,
    covariance: DenseMatrix,
    chol: DenseMatrix,
}

impl GaussianModel {
    pub fn new(mean: DenseVector, covariance: DenseMatrix) -> Result<Self> {
        if covariance.rows() != mean.len() || !covariance.is_square() {
            return Err(Error::DimensionMismatch { expected: mean.len(), found: covariance.rows() });
        }
        let asym = covariance.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::NonSymmetric { asymmetry: asym });
        }
        let chol = cholesky(&covariance)?;
        Ok(Self { mean, covariance, chol })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DenseVector::zeros(d), DenseMatrix::identity(d)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DenseVector {
        &self.mean
    }

    pub fn covariance(&self) -> &DenseMatrix {
        &self.covariance
    }

    /// Lower factor `L` with `L·Lᵀ = Σ`.
    pub fn chol(&self) -> &DenseMatrix {
        &self.chol
    }

    pub fn logdet_cov(&self) -> f64 {
        self.chol.diag().iter().map(|d| 2.0 * d.ln()).sum()
    }

    /// Differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        0.5 * self.dim() as f64 * (2.0 * PI * E).ln() + 0.5 * self.logdet_cov()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let z = self.whiten(x);
        let sq: f64 = z.iter().map(|v| v * v).sum();
        -0.5 * self.dim() as f64 * (2.0 * PI).ln() - 0.5 * self.logdet_cov() - 0.5 * sq
    }

    fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(self.mean.iter()).map(|(a, m)| a - m).collect();
        solve_lower(&self.chol, &centered)
    }
}

/// Mean and unbiased covariance of the rows, with a `1e-6·tr(Σ)/d` ridge.
pub fn fit_gaussian(samples: &[DenseVector]) -> Result<GaussianModel> {
    let d = samples.first().ok_or(Error::Empty)?.len();
    let mut flat = Vec::with_capacity(samples.len() * d);
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: s.len() });
        }
        flat.extend_from_slice(s.as_slice());
    }
    fit_gaussian_rows(d, &flat)
}

/// [`fit_gaussian`] over row-major samples of dimension `d`.
pub fn fit_gaussian_rows(d: usize, rows: &[f64]) -> Result<GaussianModel> {
    if d == 0 || rows.len() % d != 0 {
        return Err(Error::DimensionMismatch { expected: d, found: rows.len() });
    }
    let count = rows.len() / d;
    if count < d + 1 {
        return Err(Error::DegenerateData(format!("{count} samples cannot fit a {d}-dimensional Gaussian")));
    }
    let mut mean = vec![0.0; d];
    for row in rows.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut cov = DenseMatrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in rows.chunks_exact(d) {
        for i in 0..d {
            centered[i] = row[i] - mean[i];
        }
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    let denom = (count - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    // Constant data leaves only rounding noise in the covariance.
    let scale = rows.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if !(cov.trace() > 1e-20 * scale * scale) {
        return Err(Error::DegenerateData("samples have no spread".into()));
    }
    let ridge = 1e-6 * cov.trace() / d as f64;
    cov.add_diag(ridge);
    let mean = DenseVector::new(mean).map_err(|_| Error::DegenerateData("non-finite samples".into()))?;
    GaussianModel::new(mean, cov).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::DegenerateData("sample covariance is singular".into()),
        other => other,
    })
}

/// `count` draws `μ + L·z` with `z` standard normal, from `rng`.
pub fn gaussian_sample_with(g: &GaussianModel, count: usize, rng: &mut impl Rng) -> Vec<DenseVector> {
    let d = g.dim();
    (0..count)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let lz = g.chol.matvec(&z);
            DenseVector::from_vec((0..d).map(|i| g.mean[i] + lz[i]).collect())
        })
        .collect()
}

/// `count` draws from the `data` substream of `seed`.
pub fn gaussian_sample(g: &GaussianModel, count: usize, seed: u64) -> Vec<DenseVector> {
    gaussian_sample_with(g, count, &mut substream(seed, "data"))
}

/// `L⁻¹·(x − μ)`, the exact normalizing map of `g`.
pub fn whitening_map(g: &GaussianModel, x: &DenseVector) -> Result<DenseVector> {
    if x.len() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), found: x.len() });
    }
    Ok(DenseVector::from_vec(g.whiten(x.as_slice())))
}

/// Squared 2-Wasserstein distance between two Gaussians.
pub fn bures_wasserstein_cost(p: &GaussianModel, q: &GaussianModel) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    let mean_sq: f64 = p.mean.iter().zip(q.mean.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let rq = sqrt_psd(&q.covariance)?;
    let mut cross = rq.matmul(&p.covariance).matmul(&rq);
    // Exact symmetry for the eigensolver.
    let t = cross.transpose();
    cross.add_assign_scaled(&t, 1.0);
    let cross = cross.map(|v| 0.5 * v);
    let root = sqrt_psd(&cross)?;
    Ok(mean_sq + p.covariance.trace() + q.covariance.trace() - 2.0 * root.trace())
}

/// Differential entropy of `data`: no flow can push it to a standard
/// normal with a lower expected NLL.
pub fn entropy_bound(data: &GaussianModel) -> f64 {
    data.entropy()
}

/// `KL(p ‖ q)` in nats.
pub fn kl_divergence(p: &GaussianModel, q: &GaussianModel) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    let d = p.dim();
    let mut trace = 0.0;
    for c in 0..d {
        let col: Vec<f64> = (0..d).map(|r| p.covariance[(r, c)]).collect();
        trace += solve_spd(&q.covariance, &col)?[c];
    }
    let diff: Vec<f64> = q.mean.iter().zip(p.mean.iter()).map(|(a, b)| a - b).collect();
    let z = solve_lower(&q.chol, &diff);
    let maha: f64 = z.iter().map(|v| v * v).sum();
    let kl = 0.5 * (trace + maha - d as f64 + q.logdet_cov() - p.logdet_cov());
    Ok(kl.max(0.0))
}

/// A Gaussian with mean drawn from `N(0, I)` and covariance `Q·Λ·Qᵀ`: a
/// random rotation `Q` and eigenvalues log-spaced from `λ_min` to `λ_max`
/// (their geometric mean when `d = 1`).
pub fn random_gaussian(d: usize, lambda: (f64, f64), rng: &mut impl Rng) -> GaussianModel {
    let mean: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let q = random_rotation(d, rng);
    let (lo, hi) = (lambda.0.ln(), lambda.1.ln());
    let eig: Vec<f64> = (0..d)
        .map(|k| if d == 1 { (0.5 * (lo + hi)).exp() } else { (lo + (hi - lo) * k as f64 / (d - 1) as f64).exp() })
        .collect();
    let mut cov = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v: f64 = (0..d).map(|k| q[(i, k)] * eig[k] * q[(j, k)]).sum();
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    GaussianModel::new(DenseVector::from_vec(mean), cov).expect("eigenvalues are positive")
}

// Gram–Schmidt on a Gaussian matrix; columns are orthonormal.
fn random_rotation(d: usize, rng: &mut impl Rng) -> DenseMatrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    let mut q = DenseMatrix::zeros(d, d);
    for (c, col) in cols.iter().enumerate() {
        for r in 0..d {
            q[(r, c)] = col[r];
        }
    }
    q
}

/// One row of the coupling results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub method: String,
    pub d: usize,
    /// Mean test NLL under the standard normal prior, nats per sample.
    pub nll: f64,
    /// Mean squared displacement `‖x − g(x)‖²` on the test set.
    pub cost: f64,
    pub optimal_cost: f64,
    pub entropy_bound: f64,
    pub seed: u64,
}

impl CouplingReport {
    pub const HEADER: [&'static str; 7] = ["method", "d", "nll", "cost", "optimal_cost", "entropy_bound", "seed"];

    pub fn csv(reports: &[CouplingReport]) -> Csv {
        let mut csv = Csv::new(&Self::HEADER);
        for r in reports {
            csv.push(vec![
                Cell::from(r.method.as_str()),
                Cell::from(r.d),
                Cell::from(r.nll),
                Cell::from(r.cost),
                Cell::from(r.optimal_cost),
                Cell::from(r.entropy_bound),
                Cell::from(r.seed),
            ]);
        }
        csv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub train_samples: usize,
    pub test_samples: usize,
    /// Seed for the data substreams; training randomness comes from `train.seed`.
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { train_samples: 10_000, test_samples: 10_000, seed: 42, train: TrainConfig::default() }
    }
}

/// Training and test draws for a coupling run, from separate substreams.
pub fn coupling_samples(data: &GaussianModel, cfg: &CouplingConfig) -> (Vec<DenseVector>, Vec<DenseVector>) {
    let train = gaussian_sample_with(data, cfg.train_samples, &mut substream(cfg.seed, "data"));
    let test = gaussian_sample_with(data, cfg.test_samples, &mut substream(cfg.seed, "test"));
    (train, test)
}

fn oracles(data: &GaussianModel) -> Result<(f64, f64)> {
    Ok((bures_wasserstein_cost(data, &GaussianModel::standard(data.dim()))?, entropy_bound(data)))
}

fn mean_cost(xs: &[DenseVector], ys: &[DenseVector]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    total / xs.len() as f64
}

/// A trained flow and its evaluation.
#[derive(Debug, Clone)]
pub struct CouplingRun {
    pub report: CouplingReport,
    pub model: MgnModel,
    pub train: TrainReport,
}

#[derive(Debug, thiserror::Error)]
pub enum CouplingError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error(transparent)]
    Training(#[from] Box<TrainFailure>),
}

/// Trains `model` as a flow on samples of `data` and evaluates NLL and
/// transport cost on held-out samples.
pub fn run_coupling(
    method: &str,
    model: &MgnModel,
    data: &GaussianModel,
    cfg: &CouplingConfig,
) -> std::result::Result<CouplingRun, CouplingError> {
    if model.gamma() <= 0.0 {
        return Err(Error::InvalidModel("flows need gamma > 0".into()).into());
    }
    if model.n() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), found: model.n() }.into());
    }
    let (optimal_cost, bound) = oracles(data)?;
    let (train, test) = coupling_samples(data, cfg);
    let d = data.dim();
    let set = InMemory::unlabeled(d, train.iter().flat_map(|x| x.iter().copied()).collect());
    let (trained, report) = train_with(model, &set, &FlowNll, &cfg.train, |_, _, _| {}).map_err(Box::new)?;
    let batch = Batch::unlabeled(d, test.iter().flat_map(|x| x.iter().copied()).collect());
    let nll = evaluate(&trained, &FlowNll, &batch)?;
    let mapped = trained.forward_batch(&test)?;
    Ok(CouplingRun {
        report: CouplingReport {
            method: method.to_string(),
            d,
            nll,
            cost: mean_cost(&test, &mapped),
            optimal_cost,
            entropy_bound: bound,
            seed: cfg.seed,
        },
        model: trained,
        train: report,
    })
}

/// The whitening-transform baseline: a Gaussian fitted to the training
/// draws, evaluated on the test draws.
pub fn run_whitening(data: &GaussianModel, cfg: &CouplingConfig) -> Result<(CouplingReport, GaussianModel)> {
    let (optimal_cost, bound) = oracles(data)?;
    let (train, test) = coupling_samples(data, cfg);
    let fitted = fit_gaussian(&train)?;
    let d = data.dim();
    let mut nll = 0.0;
    let mut mapped = Vec::with_capacity(test.len());
    for x in &test {
        let z = whitening_map(&fitted, x)?;
        nll += 0.5 * z.norm_sq();
        mapped.push(z);
    }
    nll = nll / test.len() as f64 + 0.5 * d as f64 * (2.0 * PI).ln() + 0.5 * fitted.logdet_cov();
    let report = CouplingReport {
        method: "whitening".into(),
        d,
        nll,
        cost: mean_cost(&test, &mapped),
        optimal_cost,
        entropy_bound: bound,
        seed: cfg.seed,
    };
    Ok((report, fitted))
}

/// Closed-form `E‖x − L⁻¹(x − μ)‖²` for `x ~ data` and the whitening map of `data`.
pub fn whitening_cost(data: &GaussianModel) -> f64 {
    let d = data.dim() as f64;
    data.mean.norm_sq() + data.covariance.trace() - 2.0 * data.chol.trace() + d
}

/// Points before and after a map, ranked by their first coordinate so a
/// plot can color both panels consistently. At most two coordinates.
pub fn scatter_csv(method: &str, xs: &[DenseVector], ys: &[DenseVector]) -> Csv {
    let k = xs.first().map_or(0, |x| x.len().min(2));
    let mut header = vec!["method".to_string(), "index".into(), "rank".into()];
    header.extend((0..k).map(|i| format!("x{}", i + 1)));
    header.extend((0..k).map(|i| format!("y{}", i + 1)));
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&refs);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a][0].total_cmp(&xs[b][0]).then(a.cmp(&b)));
    let mut rank = vec![0usize; xs.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
        let mut row = vec![Cell::from(method), Cell::from(i), Cell::from(rank[i])];
        row.extend((0..k).map(|j| Cell::from(x[j])));
        row.extend((0..k).map(|j| Cell::from(y[j])));
        csv.push(row);
    }
    csv
}

/// Log-determinant of the covariance through the generic Cholesky path.
pub fn logdet_cov(g: &GaussianModel) -> Result<f64> {
    logdet_pd(&g.covariance)
}
