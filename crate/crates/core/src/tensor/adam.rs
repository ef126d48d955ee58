use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{invalid_arg, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one parameter set. Moments are sized lazily on the
/// first step and checked against the parameters on every later one.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }
}

/// One bias-corrected Adam update of `params` using `grads`.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Vec<f64>], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() {
        return Err(invalid_arg!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != g.len() {
            return Err(invalid_arg!(
                "gradient {i} has {} values for a parameter of shape {:?}",
                g.len(),
                p.shape()
            ));
        }
    }
    if state.t == 0 && state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.numel()) {
        return Err(invalid_arg!("optimizer state does not match the parameter set"));
    }

    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let bias1 = 1.0 - beta1.powi(state.t as i32);
    let bias2 = 1.0 - beta2.powi(state.t as i32);
    for ((param, grad), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((w, &g), m), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
