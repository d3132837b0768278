use serde::{Deserialize, Serialize};

use super::TrainConfig;

/// First and second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    assert_eq!(params.len(), grads.len(), "adam gradient length");
    assert_eq!(params.len(), state.m.len(), "adam state length");
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &cfg);
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = TrainConfig { learning_rate: 0.1, ..TrainConfig::default() };
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, &cfg);
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps).
        let want = -0.1 / (1.0 + cfg.adam_eps);
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn matches_hand_unrolled_recurrence() {
        let cfg = TrainConfig { learning_rate: 0.05, adam_beta1: 0.8, adam_beta2: 0.9, adam_eps: 1e-6, ..TrainConfig::default() };
        let grads = [0.3, -1.0, 2.0, 0.0, 0.7];
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        for (t, &g) in grads.iter().enumerate() {
            adam_step(&mut p, &[g], &mut s, &cfg);
            m = 0.8 * m + 0.2 * g;
            v = 0.9 * v + 0.1 * g * g;
            let k = (t + 1) as i32;
            x -= 0.05 * (m / (1.0 - 0.8f64.powi(k))) / ((v / (1.0 - 0.9f64.powi(k))).sqrt() + 1e-6);
            assert_eq!(p[0].to_bits(), x.to_bits());
        }
    }
}
