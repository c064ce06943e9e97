use serde::{Deserialize, Serialize};

use super::ParamStore;

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// One bias-corrected Adam update over every slot, then zeroes the gradients.
pub fn adam_step(params: &mut ParamStore, cfg: &Adam) {
    params.adam_steps += 1;
    let t = params.adam_steps as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for slot in params.slots_mut() {
        let grads = slot.grad.data_mut();
        let values = slot.value.data_mut();
        for i in 0..values.len() {
            let g = grads[i];
            let m = cfg.beta1 * slot.first_moment[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * slot.second_moment[i] + (1.0 - cfg.beta2) * g * g;
            slot.first_moment[i] = m;
            slot.second_moment[i] = v;
            values[i] -= cfg.lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
            grads[i] = 0.0;
        }
    }
}
