//! Gradient-field regression on the unit square: fit a monotone network to
//! the gradient of a fixed quartic potential and measure the error in dB.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::export::{normalize_to_bytes, pgm_bytes, Cell, Csv};
use crate::linalg::DenseVector;
use crate::mgn::MgnModel;
use crate::training::{train_with, Labeled, Mae, TrainConfig, TrainFailure, TrainReport, UnitSquare};

/// Lower clamp on reported errors; an exact fit would otherwise be −∞ dB.
pub const MSE_DB_FLOOR: f64 = -120.0;

/// `f(x) = x₁⁴ + x₂/2 + x₁x₂/2 + 3x₂²/2 − x₂³/3`.
pub fn potential(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    a.powi(4) + 0.5 * b + 0.5 * a * b + 1.5 * b * b - b.powi(3) / 3.0
}

pub fn true_gradient_at(x: &[f64]) -> [f64; 2] {
    let (a, b) = (x[0], x[1]);
    [4.0 * a.powi(3) + 0.5 * b, 0.5 + 0.5 * a + 3.0 * b - b * b]
}

/// `∇f(x)`.
pub fn true_gradient(x: &DenseVector) -> DenseVector {
    DenseVector::from_vec(true_gradient_at(x.as_slice()).to_vec())
}

/// `10·log₁₀(mean)`, floored at [`MSE_DB_FLOOR`].
pub fn mse_db(mean_squared_error: f64) -> f64 {
    if mean_squared_error <= 0.0 {
        return MSE_DB_FLOOR;
    }
    (10.0 * mean_squared_error.log10()).max(MSE_DB_FLOOR)
}

/// Per-point ℓ₂ errors of a field on a `size × size` lattice over
/// `[0, 1]²`. Row `j` holds `x₂ = j/(size−1)`, column `i` holds `x₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGrid {
    pub size: usize,
    pub errors: Vec<f64>,
    pub predicted: Vec<[f64; 2]>,
}

impl ErrorGrid {
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        let s = (self.size - 1) as f64;
        [i as f64 / s, j as f64 / s]
    }

    pub fn mse(&self) -> f64 {
        self.errors.iter().map(|e| e * e).sum::<f64>() / self.errors.len() as f64
    }

    pub fn mse_db(&self) -> f64 {
        mse_db(self.mse())
    }

    /// `x1,x2,error`.
    pub fn csv(&self) -> Csv {
        let mut csv = Csv::new(&["x1", "x2", "error"]);
        for j in 0..self.size {
            for i in 0..self.size {
                let p = self.point(i, j);
                csv.push(vec![Cell::from(p[0]), Cell::from(p[1]), Cell::from(self.errors[j * self.size + i])]);
            }
        }
        csv
    }

    /// `x1,x2,pred1,pred2,true1,true2`.
    pub fn quiver_csv(&self) -> Csv {
        let mut csv = Csv::new(&["x1", "x2", "pred1", "pred2", "true1", "true2"]);
        for j in 0..self.size {
            for i in 0..self.size {
                let p = self.point(i, j);
                let g = self.predicted[j * self.size + i];
                let t = true_gradient_at(&p);
                csv.push(vec![p[0].into(), p[1].into(), g[0].into(), g[1].into(), t[0].into(), t[1].into()]);
            }
        }
        csv
    }

    /// Grayscale map normalized to the largest error, `x₂ = 1` on the top row.
    pub fn pgm(&self) -> Vec<u8> {
        let bytes = normalize_to_bytes(&self.errors);
        let mut flipped = Vec::with_capacity(bytes.len());
        for j in (0..self.size).rev() {
            flipped.extend_from_slice(&bytes[j * self.size..(j + 1) * self.size]);
        }
        pgm_bytes(self.size, self.size, &flipped)
    }
}

/// Errors of `field` against [`true_gradient_at`] on the lattice.
pub fn error_grid(size: usize, field: impl Fn(&[f64]) -> [f64; 2]) -> ErrorGrid {
    assert!(size >= 2, "lattice needs two points per side");
    let mut errors = Vec::with_capacity(size * size);
    let mut predicted = Vec::with_capacity(size * size);
    let s = (size - 1) as f64;
    for j in 0..size {
        for i in 0..size {
            let p = [i as f64 / s, j as f64 / s];
            let g = field(&p);
            let t = true_gradient_at(&p);
            errors.push(((g[0] - t[0]).powi(2) + (g[1] - t[1]).powi(2)).sqrt());
            predicted.push(g);
        }
    }
    ErrorGrid { size, errors, predicted }
}

/// Lattice errors of a 2-d model.
pub fn model_error_grid(model: &MgnModel, size: usize) -> Result<ErrorGrid> {
    if model.n() != 2 {
        return Err(crate::Error::DimensionMismatch { expected: 2, found: model.n() });
    }
    let prepared = model.prepare();
    Ok(error_grid(size, |p| {
        let y = prepared.forward(p);
        [y[0], y[1]]
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradFieldConfig {
    /// Training points drawn from the unit square; regenerated, never stored.
    pub samples: usize,
    /// Points per side of the evaluation lattice.
    pub lattice: usize,
    /// Seed for the data stream; training randomness comes from `train.seed`.
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for GradFieldConfig {
    fn default() -> Self {
        Self { samples: 1_000_000, lattice: 101, seed: 42, train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct GradFieldResult {
    pub mse_db: f64,
    pub param_count: usize,
    pub grid: ErrorGrid,
    pub model: MgnModel,
    pub train: TrainReport,
}

/// Trains `model` with MAE against the true gradient and evaluates it on
/// the lattice.
pub fn run_gradfield(model: &MgnModel, cfg: &GradFieldConfig) -> std::result::Result<GradFieldResult, Box<TrainFailure>> {
    let data = Labeled {
        inner: UnitSquare { seed: cfg.seed, count: cfg.samples },
        target_dim: 2,
        label: |x: &[f64], t: &mut [f64]| t.copy_from_slice(&true_gradient_at(x)),
    };
    let (trained, mut report) = train_with(model, &data, &Mae, &cfg.train, |_, _, _| {}).map_err(Box::new)?;
    let grid = match model_error_grid(&trained, cfg.lattice) {
        Ok(g) => g,
        Err(error) => return Err(Box::new(TrainFailure { error, model: trained, report })),
    };
    let db = grid.mse_db();
    report.metrics.insert("mse_db".into(), db);
    Ok(GradFieldResult { mse_db: db, param_count: trained.param_count(), grid, model: trained, train: report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use crate::linalg::DenseMatrix;
    use crate::mgn::{init_params, CmgnModel, ModelSpec};
    use crate::properties::{check_model, CheckConfig};

    #[test]
    fn gradient_examples() {
        assert_eq!(true_gradient_at(&[0.0, 0.0]), [0.0, 0.5]);
        assert_eq!(true_gradient_at(&[1.0, 1.0]), [4.5, 3.0]);
        let h = 1e-5;
        for p in [[0.1, 0.9], [0.5, 0.5], [0.93, 0.07], [0.0, 1.0]] {
            let g = true_gradient_at(&p);
            for k in 0..2 {
                let mut a = p;
                let mut b = p;
                a[k] += h;
                b[k] -= h;
                let fd = (potential(&a) - potential(&b)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6, "{p:?}[{k}]: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn exact_field_hits_the_floor() {
        let grid = error_grid(101, true_gradient_at);
        assert_eq!(grid.mse_db(), MSE_DB_FLOOR);
        assert_eq!(mse_db(1e-20), MSE_DB_FLOOR);
        assert!((mse_db(0.1) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_model_error_is_the_mean_gradient_energy() {
        let zero = MgnModel::Cmgn(
            CmgnModel::new(
                DenseMatrix::zeros(2, 2),
                vec![DenseVector::zeros(2)],
                DenseVector::zeros(2),
                DenseMatrix::zeros(2, 2),
                vec![Activation::TanhOnly],
                None,
                0.0,
            )
            .unwrap(),
        );
        let grid = model_error_grid(&zero, 101).unwrap();
        let mut sum = 0.0;
        for j in 0..101 {
            for i in 0..101 {
                let (a, b) = (i as f64 / 100.0, j as f64 / 100.0);
                let g1 = 4.0 * a * a * a + b / 2.0;
                let g2 = 0.5 + a / 2.0 + 3.0 * b - b * b;
                sum += g1 * g1 + g2 * g2;
            }
        }
        let want = 10.0 * (sum / 10201.0).log10();
        assert!((grid.mse_db() - want).abs() < 1e-12);
    }

    #[test]
    fn exports_have_lattice_shape() {
        let grid = error_grid(3, |p| [p[0], p[1]]);
        assert_eq!(grid.csv().len(), 9);
        let q = grid.quiver_csv().render();
        assert!(q.starts_with("x1,x2,pred1,pred2,true1,true2\n"));
        let pgm = grid.pgm();
        assert!(pgm.starts_with(b"P5\n3 3\n255\n"));
        // Top row of the image is x₂ = 1.
        let body = &pgm[pgm.len() - 9..];
        let top_max = grid.errors[6..9].iter().cloned().fold(0.0, f64::max);
        let all_max = grid.errors.iter().cloned().fold(0.0, f64::max);
        assert_eq!(body[..3].iter().any(|&b| b == 255), top_max == all_max);
    }

    #[test]
    fn short_run_improves_and_stays_monotone() {
        let model = init_params(&ModelSpec::reference_cmgn(), 1).unwrap();
        let before = model_error_grid(&model, 101).unwrap().mse_db();
        let cfg = GradFieldConfig {
            samples: 20_000,
            train: TrainConfig { epochs: 2, batch_size: 64, learning_rate: 1e-2, ..TrainConfig::default() },
            ..GradFieldConfig::default()
        };
        let result = run_gradfield(&model, &cfg).unwrap();
        assert!(result.mse_db < before - 3.0, "{} vs {before}", result.mse_db);
        assert_eq!(result.param_count, 14);
        assert_eq!(result.train.metrics["mse_db"], result.mse_db);
        let recomputed = mse_db(result.grid.errors.iter().map(|e| e * e).sum::<f64>() / 10201.0);
        assert!((recomputed - result.mse_db).abs() < 1e-12);

        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let check = CheckConfig { lo: 0.0, hi: 1.0, points: 5, ..CheckConfig::default() };
        for o in check_model(&result.model, &mut rng, &check) {
            assert!(o.passed, "{:?}", o.violation);
        }
    }
}
