use super::{Result, TrainError};
use crate::tensor::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter name, plus the step count.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

/// One Adam update with L2-coupled weight decay (`g += wd·θ`) over every
/// parameter holding a gradient, followed by parameter constraints.
///
/// The whole step is rejected, leaving parameters and state untouched,
/// when any gradient is non-finite.
pub fn adam_step(
    params: &mut ParamStore,
    state: &mut AdamState,
    cfg: &AdamConfig,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    for (name, p) in params.iter() {
        if let Some(g) = &p.grad {
            if g.shape() != p.value.shape() {
                return Err(TrainError::Optimizer(format!(
                    "gradient of {name} has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.value.shape()
                )));
            }
            if !g.is_finite() {
                return Err(TrainError::NonFiniteGradient(name.clone()));
            }
        }
        for moments in [&state.m, &state.v] {
            if let Some(t) = moments.get(name) {
                if t.shape() != p.value.shape() {
                    return Err(TrainError::Optimizer(format!("optimizer state for {name} has the wrong shape")));
                }
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let Some(g) = p.grad.as_ref().filter(|_| p.requires_grad) else {
            continue;
        };
        let shape = p.value.shape().to_vec();
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(shape.clone()));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(shape));
        let theta = p.value.data_mut();
        for (((th, &gi), mi), vi) in theta
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let gi = gi + weight_decay * *th;
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *th -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    params.apply_constraints();
    Ok(())
}
