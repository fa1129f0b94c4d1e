use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm gradient clipping threshold applied before the update.
    pub max_grad_norm: Option<f64>,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
        }
    }

    pub fn with_max_grad_norm(mut self, max: f64) -> Self {
        self.max_grad_norm = Some(max);
        self
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for (_, e) in store.iter_mut() {
            e.grads.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// One bias-corrected Adam step over every entry of `store`, then zeroes
/// the gradients.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    if let Some(max) = cfg.max_grad_norm {
        clip_grad_norm(store, max);
    }
    if let Some((name, _)) = store
        .iter()
        .find(|(_, e)| e.grads.iter().any(|g| !g.is_finite()))
    {
        return Err(Error::NonFiniteGradient { param: name.clone() });
    }
    for (_, e) in store.iter_mut() {
        e.step_count += 1;
        let t = e.step_count as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..e.values.len() {
            let g = e.grads[i];
            e.adam_m[i] = cfg.beta1 * e.adam_m[i] + (1.0 - cfg.beta1) * g;
            e.adam_v[i] = cfg.beta2 * e.adam_v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = e.adam_m[i] / bc1;
            let v_hat = e.adam_v[i] / bc2;
            e.values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            e.grads[i] = 0.0;
        }
    }
    Ok(())
}
