//! Adam with decoupled (AdamW-style) L2 weight decay on the weights.

use crate::reward_net::{Gradients, RewardModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Shrinks every weight by `(1 − learning_rate·weight_decay)` per step.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    first: Gradients,
    second: Gradients,
}

impl AdamState {
    pub fn new(model: &RewardModel) -> Self {
        Self { step: 0, first: model.zero_gradients(), second: model.zero_gradients() }
    }
}

fn adam_delta(m: &mut f64, v: &mut f64, g: f64, c: &AdamConfig, bias1: f64, bias2: f64) -> f64 {
    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
    let m_hat = *m / bias1;
    let v_hat = *v / bias2;
    m_hat / (libm::sqrt(v_hat) + c.epsilon)
}

/// One descent step on `gradient` (the gradient of a loss to minimise).
pub fn apply_update(model: &mut RewardModel, gradient: &Gradients, state: &mut AdamState, config: &AdamConfig) -> Result<()> {
    if !gradient.is_congruent(model) || !state.first.is_congruent(model) {
        return Err(Error::ShapeMismatch);
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - libm::pow(config.beta1, t as f64);
    let bias2 = 1.0 - libm::pow(config.beta2, t as f64);
    let lr = config.learning_rate;
    for (k, layer) in model.layers.iter_mut().enumerate() {
        for i in 0..layer.weights.len() {
            let step = adam_delta(&mut state.first.weights[k][i], &mut state.second.weights[k][i], gradient.weights[k][i], config, bias1, bias2);
            let w = &mut layer.weights[i];
            *w = *w * (1.0 - lr * config.weight_decay) - lr * step;
        }
        for i in 0..layer.biases.len() {
            let step = adam_delta(&mut state.first.biases[k][i], &mut state.second.biases[k][i], gradient.biases[k][i], config, bias1, bias2);
            layer.biases[i] -= lr * step;
        }
    }
    Ok(())
}
