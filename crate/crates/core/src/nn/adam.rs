//! Adam with decoupled weight decay.
//!
//! The decay term is applied directly to the parameters (`θ ← θ − lr·wd·θ`)
//! rather than folded into the gradient, so the adaptive scaling never
//! touches it. Defaults follow the federation's training recipe:
//! `lr = 1e-3`, `wd = 1e-2`, `β = (0.9, 0.999)`, `ε = 1e-8`.

use serde::{Deserialize, Serialize};

use super::{ModelParams, NnError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, weight_decay: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update in place: moment update, bias correction, adaptive step,
/// then decoupled decay.
pub fn adam_step(
    model: &mut ModelParams,
    gradient: &[f64],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<(), NnError> {
    let dim = model.theta().len();
    if gradient.len() != dim || state.m.len() != dim {
        return Err(NnError::DimensionMismatch {
            what: "adam gradient/state",
            expected: dim,
            got: if gradient.len() != dim { gradient.len() } else { state.m.len() },
        });
    }
    state.t += 1;
    let bias1 = 1.0 - config.beta1.powi(state.t as i32);
    let bias2 = 1.0 - config.beta2.powi(state.t as i32);
    let theta = model.theta_mut();
    for j in 0..dim {
        let g = gradient[j];
        state.m[j] = config.beta1 * state.m[j] + (1.0 - config.beta1) * g;
        state.v[j] = config.beta2 * state.v[j] + (1.0 - config.beta2) * g * g;
        let m_hat = state.m[j] / bias1;
        let v_hat = state.v[j] / bias2;
        theta[j] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        theta[j] -= config.lr * config.weight_decay * theta[j];
    }
    Ok(())
}
