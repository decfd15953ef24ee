//! Adam with bias correction over the flat parameter vector.

use super::MlpNet;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update; clamps the net's invariants (log-std range) afterwards.
pub fn adam_step(net: &mut MlpNet, grads: &[f64], state: &mut AdamState) {
    assert_eq!(grads.len(), net.param_count(), "gradient shape");
    assert_eq!(state.m.len(), net.param_count(), "optimizer shape");
    state.t += 1;
    let b1t = 1.0 - state.beta1.powi(state.t as i32);
    let b2t = 1.0 - state.beta2.powi(state.t as i32);
    let params = net.params_mut();
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps_hat);
    }
    net.clamp_invariants();
}
