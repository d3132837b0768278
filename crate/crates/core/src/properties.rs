//! Property checks that every monotone gradient network must pass: a
//! symmetric, positive semidefinite Jacobian that agrees with finite
//! differences of the forward map, pairwise monotonicity, and vanishing
//! circulation around closed loops.
//!
//! These back the `verify` command and the acceptance suite; they also
//! catch models that were edited into violating their guarantees.

use rand::Rng;
use serde::Serialize;

use crate::linalg::{sym_eigen, DenseMatrix, DenseVector};
use crate::mgn::MgnModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Symmetry,
    Psd,
    Monotonicity,
    FiniteDifference,
    Conservativity,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Suite::Symmetry, Suite::Psd, Suite::Monotonicity, Suite::FiniteDifference, Suite::Conservativity];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Symmetry => "symmetry",
            Suite::Psd => "psd",
            Suite::Monotonicity => "monotonicity",
            Suite::FiniteDifference => "finite_difference",
            Suite::Conservativity => "conservativity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Max `|J − Jᵀ|` entry.
    pub symmetry: f64,
    /// Slack below zero (or below γ) allowed for the smallest eigenvalue.
    pub psd: f64,
    /// Slack below zero for `⟨g(x) − g(y), x − y⟩`.
    pub monotone: f64,
    pub fd_step: f64,
    /// Relative Frobenius error between analytic and finite-difference Jacobians.
    pub fd_rel: f64,
    /// Circulation relative to the mean `‖g‖` on the loop.
    pub conservative_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { symmetry: 1e-12, psd: 1e-8, monotone: 1e-8, fd_step: 1e-6, fd_rel: 1e-5, conservative_rel: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckConfig {
    /// Jacobian checks per model.
    pub points: usize,
    /// Monotonicity pairs per model.
    pub pairs: usize,
    /// Trapezoid nodes per edge of the circulation loop.
    pub quadrature: usize,
    /// Inputs are drawn uniformly from `[lo, hi]ⁿ`.
    pub lo: f64,
    pub hi: f64,
    pub tol: Tolerances,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { points: 1, pairs: 10_000, quadrature: 10_000, lo: -3.0, hi: 3.0, tol: Tolerances::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub suite: Suite,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub value: f64,
    pub detail: String,
}

/// Outcome of one suite on one model.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub passed: bool,
    /// The statistic the tolerance applies to, at its worst.
    pub worst: f64,
    pub violation: Option<Violation>,
}

/// Central-difference Jacobian of the forward map.
pub fn fd_jacobian(model: &MgnModel, x: &[f64], h: f64) -> DenseMatrix {
    let n = x.len();
    let prepared = model.prepare();
    let mut j = DenseMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for c in 0..n {
        xp[c] = x[c] + h;
        let fp = prepared.forward(&xp);
        xp[c] = x[c] - h;
        let fm = prepared.forward(&xp);
        xp[c] = x[c];
        for r in 0..n {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// `∮ g·dr` around the unit square in coordinates `(i, j)` (other
/// coordinates zero), trapezoid rule with `nodes` points per edge. Returns
/// the circulation and the mean `‖g‖` over the nodes.
pub fn circulation(model: &MgnModel, i: usize, j: usize, nodes: usize) -> (f64, f64) {
    let n = model.n();
    let prepared = model.prepare();
    let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
    let mut total = 0.0;
    let mut norm_sum = 0.0;
    let mut count = 0usize;
    let mut x = vec![0.0; n];
    for edge in corners.windows(2) {
        let ((a0, a1), (b0, b1)) = (edge[0], edge[1]);
        let (d0, d1) = (b0 - a0, b1 - a1);
        let steps = nodes - 1;
        let mut acc = 0.0;
        for k in 0..nodes {
            let t = k as f64 / steps as f64;
            x[i] = a0 + t * d0;
            x[j] = a1 + t * d1;
            let g = prepared.forward(&x);
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            acc += w * (g[i] * d0 + g[j] * d1);
            norm_sum += g.iter().map(|v| v * v).sum::<f64>().sqrt();
            count += 1;
        }
        total += acc / steps as f64;
    }
    (total, norm_sum / count as f64)
}

fn sample(rng: &mut impl Rng, n: usize, cfg: &CheckConfig) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(cfg.lo..=cfg.hi)).collect()
}

/// Runs every suite on `model`. Conservativity needs `n ≥ 2` and is
/// reported as passed (vacuously) for scalar maps.
pub fn check_model(model: &MgnModel, rng: &mut impl Rng, cfg: &CheckConfig) -> Vec<SuiteOutcome> {
    let n = model.n();
    let tol = cfg.tol;
    let gamma = model.gamma();
    let prepared = model.prepare();

    let mut sym = SuiteOutcome { suite: Suite::Symmetry, passed: true, worst: 0.0, violation: None };
    let mut psd = SuiteOutcome { suite: Suite::Psd, passed: true, worst: f64::INFINITY, violation: None };
    let mut fd = SuiteOutcome { suite: Suite::FiniteDifference, passed: true, worst: 0.0, violation: None };
    for _ in 0..cfg.points {
        let x = sample(rng, n, cfg);
        let (_, jac) = prepared.forward_jacobian(&x);

        let asym = jac.max_asymmetry();
        sym.worst = sym.worst.max(asym);
        if asym > tol.symmetry && sym.violation.is_none() {
            sym.passed = false;
            sym.violation = Some(Violation {
                suite: Suite::Symmetry,
                x: x.clone(),
                y: None,
                value: asym,
                detail: format!("max |J − Jᵀ| = {asym:e}"),
            });
        }

        let mut symmetrized = jac.clone();
        let t = symmetrized.transpose();
        symmetrized.add_assign_scaled(&t, 1.0);
        let min = sym_eigen(&symmetrized.map(|v| 0.5 * v)).map(|e| e.min()).unwrap_or(f64::NEG_INFINITY);
        psd.worst = psd.worst.min(min);
        let floor = if gamma > 0.0 { gamma - tol.psd } else { -tol.psd };
        if min < floor && psd.violation.is_none() {
            psd.passed = false;
            psd.violation = Some(Violation {
                suite: Suite::Psd,
                x: x.clone(),
                y: None,
                value: min,
                detail: format!("min eigenvalue {min:e} below {floor:e}"),
            });
        }

        let approx = fd_jacobian(model, &x, tol.fd_step);
        let rel = jac.sub(&approx).frobenius() / jac.frobenius().max(f64::MIN_POSITIVE);
        fd.worst = fd.worst.max(rel);
        if !(rel <= tol.fd_rel) && fd.violation.is_none() {
            fd.passed = false;
            fd.violation = Some(Violation {
                suite: Suite::FiniteDifference,
                x,
                y: None,
                value: rel,
                detail: format!("relative Frobenius error {rel:e}"),
            });
        }
    }

    let mut mono = SuiteOutcome { suite: Suite::Monotonicity, passed: true, worst: f64::INFINITY, violation: None };
    for _ in 0..cfg.pairs {
        let x = sample(rng, n, cfg);
        let y = sample(rng, n, cfg);
        let gx = prepared.forward(&x);
        let gy = prepared.forward(&y);
        let inner: f64 = (0..n).map(|i| (gx[i] - gy[i]) * (x[i] - y[i])).sum();
        mono.worst = mono.worst.min(inner);
        if inner < -tol.monotone && mono.violation.is_none() {
            mono.passed = false;
            mono.violation = Some(Violation {
                suite: Suite::Monotonicity,
                x,
                y: Some(y),
                value: inner,
                detail: format!("⟨g(x) − g(y), x − y⟩ = {inner:e}"),
            });
        }
    }

    let mut cons = SuiteOutcome { suite: Suite::Conservativity, passed: true, worst: 0.0, violation: None };
    if n >= 2 {
        let (circ, mean_norm) = circulation(model, 0, 1, cfg.quadrature);
        let rel = circ.abs() / mean_norm.max(f64::MIN_POSITIVE);
        cons.worst = rel;
        if !(rel <= tol.conservative_rel) {
            cons.passed = false;
            cons.violation = Some(Violation {
                suite: Suite::Conservativity,
                x: vec![0.0; n],
                y: None,
                value: rel,
                detail: format!("circulation {circ:e}, mean ‖g‖ {mean_norm:e}"),
            });
        }
    }

    vec![sym, psd, mono, fd, cons]
}

/// Pass counts across many models.
#[derive(Debug, Clone, Default)]
pub struct SuiteTally {
    pub passed: [usize; 5],
    pub total: [usize; 5],
    pub worst: [f64; 5],
    pub violations: Vec<(usize, Violation)>,
}

impl SuiteTally {
    pub fn new() -> Self {
        Self { worst: [0.0, f64::INFINITY, f64::INFINITY, 0.0, 0.0], ..Default::default() }
    }

    /// Records the outcomes for model number `index`.
    pub fn record(&mut self, index: usize, outcomes: Vec<SuiteOutcome>) {
        for o in outcomes {
            let k = Suite::ALL.iter().position(|&s| s == o.suite).expect("known suite");
            self.total[k] += 1;
            if o.passed {
                self.passed[k] += 1;
            }
            self.worst[k] = match o.suite {
                Suite::Psd | Suite::Monotonicity => self.worst[k].min(o.worst),
                _ => self.worst[k].max(o.worst),
            };
            if let Some(v) = o.violation {
                self.violations.push((index, v));
            }
        }
    }

    pub fn all_passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Convenience wrapper used by tests: the smallest eigenvalue of the
/// (already symmetric) Jacobian at `x`.
pub fn min_jacobian_eigenvalue(model: &MgnModel, x: &DenseVector) -> f64 {
    let j = model.jacobian(x).expect("dimension");
    sym_eigen(&j).expect("symmetric").min()
}
