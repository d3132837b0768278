use std::cell::Cell as Counter;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::activations::Activation;
use crate::linalg::{cholesky, DenseMatrix, DenseVector, Scalar};
use crate::mgn::{init_params, CmgnModel, CmgnSpec, MmgnModel, MmgnSpec, ModelSpec, OneOrMany, Prepared};

fn vec(v: &[f64]) -> DenseVector {
    DenseVector::new(v.to_vec()).unwrap()
}

fn identity(n: usize) -> MgnModel {
    MgnModel::Mmgn(MmgnModel::new(DenseVector::zeros(n), DenseMatrix::zeros(n, n), vec![], 1.0).unwrap())
}

fn perturbed(spec: &ModelSpec, rng: &mut ChaCha8Rng, scale: f64) -> MgnModel {
    let base = init_params(spec, rng.random()).unwrap();
    let flat: Vec<f64> = base.flatten().flat.iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect();
    base.unflatten(&flat).unwrap()
}

fn gaussian_rows(rng: &mut ChaCha8Rng, count: usize, n: usize) -> Vec<f64> {
    (0..count * n).map(|_| rng.sample(StandardNormal)).collect()
}

fn assert_grad_matches_fd<O: Objective>(model: &MgnModel, objective: &O, batch: &Batch, label: &str) {
    let flat = model.flatten().flat.into_vec();
    let (value, grad) = param_grad_flat(model, &flat, objective, batch).unwrap();
    let base = evaluate(&model.unflatten(&flat).unwrap(), objective, batch).unwrap();
    assert!((value - base).abs() <= 1e-12 * base.abs().max(1.0), "{label}: value {value} vs {base}");
    let h = 1e-6;
    for p in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[p] += h;
        minus[p] -= h;
        let fp = evaluate(&model.unflatten(&plus).unwrap(), objective, batch).unwrap();
        let fm = evaluate(&model.unflatten(&minus).unwrap(), objective, batch).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        let g = grad[p];
        assert!((g - fd).abs() <= 1e-4 * g.abs().max(fd.abs()) + 1e-8, "{label} param {p}: dual {g} vs fd {fd}");
    }
}

fn specs(n: usize) -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for act in Activation::ALL {
        for diag in [false, true] {
            for gamma in [0.0, 0.3] {
                out.push(ModelSpec::Cmgn(CmgnSpec {
                    n: Some(n),
                    hidden: 3,
                    layers: 2,
                    activation: OneOrMany::One(act.name().into()),
                    rank: Some(n),
                    gamma,
                    diag_scales: diag,
                }));
            }
        }
        if act.prop2_eligible() {
            for gamma in [0.0, 0.3] {
                out.push(ModelSpec::Mmgn(MmgnSpec {
                    n: Some(n),
                    widths: vec![2, 3],
                    activation: OneOrMany::One(act.name().into()),
                    rank: Some(n),
                    gamma,
                }));
            }
        }
    }
    out
}

#[test]
fn param_grad_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 2, 5] {
        for spec in specs(n) {
            let model = perturbed(&spec, &mut rng, 0.4);
            let inputs = gaussian_rows(&mut rng, 4, n);
            let targets = gaussian_rows(&mut rng, 4, n);
            let labeled = Batch { n, m: n, inputs: inputs.clone(), targets };
            let label = format!("{spec:?}");
            assert_grad_matches_fd(&model, &Mae, &labeled, &format!("mae {label}"));
            if spec.gamma() > 0.0 {
                let unlabeled = Batch::unlabeled(n, inputs);
                assert_grad_matches_fd(&model, &FlowNll, &unlabeled, &format!("nll {label}"));
                let mean = DenseVector::from_vec(gaussian_rows(&mut rng, 1, n));
                let mut cov = DenseMatrix::identity(n);
                for i in 0..n {
                    cov[(i, i)] = 0.5 + i as f64;
                    if i > 0 {
                        cov[(i, i - 1)] = 0.2;
                        cov[(i - 1, i)] = 0.2;
                    }
                }
                let target = GaussianTargetNll::new(mean, cholesky(&cov).unwrap());
                assert_grad_matches_fd(&model, &target, &unlabeled, &format!("target {label}"));
            }
        }
    }
}

struct SquaredNorm;

impl Objective for SquaredNorm {
    fn sample<T: Scalar>(&self, g: &Prepared<'_, T>, x: &[T], _target: &[f64]) -> crate::Result<T> {
        Ok(g.forward(x).into_iter().fold(T::zero(), |acc, v| acc + v * v))
    }
}

struct Constant;

impl Objective for Constant {
    fn sample<T: Scalar>(&self, _g: &Prepared<'_, T>, _x: &[T], _target: &[f64]) -> crate::Result<T> {
        Ok(T::from_f64(3.0))
    }
}

#[test]
fn param_grad_examples() {
    let m = MgnModel::Cmgn(
        CmgnModel::new(
            DenseMatrix::zeros(2, 2),
            vec![DenseVector::zeros(2); 2],
            DenseVector::zeros(2),
            DenseMatrix::identity(2),
            vec![Activation::TanhOnly; 2],
            None,
            0.0,
        )
        .unwrap(),
    );
    let batch = Batch::unlabeled(2, vec![1.0, 0.5]);
    let grad = param_grad(&m, &SquaredNorm, &batch).unwrap();
    let view = m.flatten();
    let seg = |name: &str| {
        let s = view.segment(name).unwrap();
        &grad.as_slice()[s.offset..s.offset + s.len]
    };
    assert!(seg("W").iter().all(|&g| g == 0.0));
    assert!(seg("V").iter().any(|&g| g != 0.0));

    let zero = param_grad(&m, &Constant, &batch).unwrap();
    assert!(zero.iter().all(|&g| g == 0.0));
    assert_eq!(zero.len(), m.param_count());
}

struct Poisoned {
    calls: Counter<usize>,
    after: usize,
}

impl Objective for Poisoned {
    fn sample<T: Scalar>(&self, g: &Prepared<'_, T>, x: &[T], _target: &[f64]) -> crate::Result<T> {
        self.calls.set(self.calls.get() + 1);
        let y = g.forward(x);
        if self.calls.get() > self.after {
            return Ok(y[0] * T::from_f64(f64::NAN));
        }
        Ok(y[0] * y[0])
    }
}

#[test]
fn non_finite_loss_aborts_with_partial_report() {
    let model = init_params(&ModelSpec::reference_cmgn(), 0).unwrap();
    let data = UnitSquare { seed: 1, count: 64 };
    let cfg = TrainConfig { batch_size: 16, epochs: 5, ..TrainConfig::default() };
    // 14 passes × 16 samples per step; poison after the first epoch.
    let objective = Poisoned { calls: Counter::new(0), after: 4 * 14 * 16 };
    let failure = train_with(&model, &data, &objective, &cfg, |_, _, _| {}).unwrap_err();
    assert!(matches!(failure.error, Error::NonFiniteLoss));
    assert_eq!(failure.report.epoch_losses.len(), 1);
    assert_eq!(failure.report.steps, 4);
    assert_ne!(failure.model, model);
    assert!(failure.to_string().contains("4 steps"));
}

#[test]
fn mae_examples() {
    let m = init_params(&ModelSpec::reference_cmgn(), 3).unwrap();
    let xs = vec![vec(&[0.1, 0.2]), vec(&[0.7, -0.3])];
    let ys = m.forward_batch(&xs).unwrap();
    assert_eq!(mae_loss(&m, &xs, &ys).unwrap(), 0.0);

    let MgnModel::Cmgn(mut c) = identity_cmgn() else { unreachable!() };
    c.out_bias = vec(&[1.0, 2.0]);
    let constant = MgnModel::Cmgn(c);
    let z = vec(&[0.0, 0.0]);
    assert_eq!(mae_loss(&constant, &[z.clone()], &[z.clone()]).unwrap(), 1.5);
    let batch = [z.clone(), z.clone()];
    let targets = [vec(&[0.0, 1.0]), vec(&[-1.0, 0.0])];
    assert_eq!(mae_loss(&constant, &batch, &targets).unwrap(), 1.5);

    assert!(matches!(mae_loss(&constant, &batch, &targets[..1]), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(mae_loss(&constant, &[vec(&[1.0])], &[z]), Err(Error::DimensionMismatch { .. })));
}

fn identity_cmgn() -> MgnModel {
    MgnModel::Cmgn(
        CmgnModel::new(
            DenseMatrix::zeros(1, 2),
            vec![DenseVector::zeros(1)],
            DenseVector::zeros(2),
            DenseMatrix::zeros(2, 2),
            vec![Activation::TanhOnly],
            None,
            0.0,
        )
        .unwrap(),
    )
}

#[test]
fn flow_nll_examples() {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    let v = flow_nll(&identity(1), &[vec(&[0.0])]).unwrap();
    assert!((v - half_log_2pi).abs() < 1e-15);
    assert!((v - 0.91894).abs() < 1e-5);

    let v = flow_nll(&identity(2), &[vec(&[1.0, 1.0])]).unwrap();
    assert!((v - ((2.0 * PI).ln() + 1.0)).abs() < 1e-14);
    assert!((v - 2.83788).abs() < 1e-5);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<DenseVector> =
        (0..100_000).map(|_| DenseVector::from_vec(gaussian_rows(&mut rng, 1, 2))).collect();
    let v = flow_nll(&identity(2), &rows).unwrap();
    assert!((v - (1.0 + (2.0 * PI).ln())).abs() < 0.02, "{v}");

    let singular = init_params(&ModelSpec::reference_cmgn(), 0).unwrap();
    let MgnModel::Cmgn(mut c) = singular else { unreachable!() };
    c.v = DenseMatrix::zeros(2, 2);
    c.w = DenseMatrix::zeros(2, 2);
    let flat = MgnModel::Cmgn(c);
    assert!(matches!(flow_nll(&flat, &[vec(&[0.0, 0.0])]), Err(Error::NotPositiveDefinite { .. })));
}

#[test]
fn zero_epochs_leave_model_unchanged() {
    let spec = ModelSpec::Cmgn(CmgnSpec { diag_scales: true, ..match ModelSpec::reference_cmgn() {
        ModelSpec::Cmgn(s) => s,
        _ => unreachable!(),
    } });
    let model = init_params(&spec, 4).unwrap();
    let data = UnitSquare { seed: 1, count: 100 };
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let (trained, report) = train(&model, &data, &cfg).unwrap();
    assert_eq!(trained, model);
    assert!(report.epoch_losses.is_empty());
    assert_eq!(report.steps, 0);
}

fn teacher_run(seed: u64) -> (MgnModel, TrainReport) {
    let teacher = init_params(&ModelSpec::reference_cmgn(), 100).unwrap();
    let teacher = {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let flat: Vec<f64> = teacher.flatten().flat.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        teacher.unflatten(&flat).unwrap()
    };
    let data = Labeled {
        inner: UnitSquare { seed, count: 2048 },
        target_dim: 2,
        label: move |x: &[f64], t: &mut [f64]| t.copy_from_slice(teacher.forward(&vec(x)).unwrap().as_slice()),
    };
    let student = init_params(&ModelSpec::reference_cmgn(), seed).unwrap();
    let cfg = TrainConfig { batch_size: 64, epochs: 5, learning_rate: 1e-2, seed, ..TrainConfig::default() };
    train(&student, &data, &cfg).unwrap()
}

#[test]
fn mae_training_on_teacher_data_improves_every_epoch() {
    let (_, report) = teacher_run(42);
    let l = &report.epoch_losses;
    assert_eq!(l.len(), 5);
    for w in l.windows(2) {
        assert!(w[1] < w[0], "{l:?}");
    }
    assert_eq!(report.steps, 5 * 32);
    assert_eq!(report.param_count, 14);
}

#[test]
fn training_is_bit_reproducible() {
    let (a, ra) = teacher_run(9);
    let (b, rb) = teacher_run(9);
    assert_eq!(a, b);
    let bits = |r: &TrainReport| r.epoch_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&ra), bits(&rb));
    assert_eq!(ra.loss_csv().render(), rb.loss_csv().render());
    let (_, rc) = teacher_run(10);
    assert_ne!(bits(&ra), bits(&rc));
}

#[test]
fn flow_training_from_the_optimum_stays_there() {
    let n = 2;
    let model = MgnModel::Mmgn(
        MmgnModel::new(
            DenseVector::zeros(n),
            DenseMatrix::identity(n).map(|v: f64| v * 0.99f64.sqrt()),
            vec![crate::mgn::MmgnModule::new(DenseMatrix::zeros(2, n), DenseVector::zeros(2), Activation::LogcoshTanh).unwrap()],
            0.01,
        )
        .unwrap(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data = InMemory::unlabeled(n, gaussian_rows(&mut rng, 4096, n));
    let cfg = TrainConfig { batch_size: 256, epochs: 3, loss: LossKind::FlowNll, ..TrainConfig::default() };
    let (trained, report) = train(&model, &data, &cfg).unwrap();
    let optimum = 0.5 * n as f64 * (1.0 + (2.0 * PI).ln());
    let test: Vec<DenseVector> = (0..20_000).map(|_| DenseVector::from_vec(gaussian_rows(&mut rng, 1, n))).collect();
    let nll = flow_nll(&trained, &test).unwrap();
    assert!((nll - optimum).abs() < 0.05, "{nll} vs {optimum}");
    assert!(report.epoch_losses.iter().all(|l| (l - optimum).abs() < 0.1));
}

#[test]
fn config_validation_and_serde() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [
        TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        TrainConfig { adam_beta1: 1.0, ..TrainConfig::default() },
        TrainConfig { adam_beta2: -0.1, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::InvalidSpec(_))));
    }
    let cfg: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "loss": "flow_nll"}"#).unwrap();
    assert_eq!(cfg.epochs, 3);
    assert_eq!(cfg.loss, LossKind::FlowNll);
    assert_eq!(cfg.batch_size, 512);
    assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
}

#[test]
fn report_serializes() {
    let (_, report) = teacher_run(1);
    let json = report.to_json().unwrap();
    let back: TrainReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    let csv = report.loss_csv().render();
    assert!(csv.starts_with("epoch,loss\n1,"));
    assert_eq!(csv.lines().count(), 6);
}
