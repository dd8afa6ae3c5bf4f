use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every tensor, then zeroes the grads.
///
/// All gradients are checked before anything is modified, so a non-finite
/// gradient leaves the store untouched.
pub fn adam_step(params: &mut ParamStore, s: &AdamSettings) -> Result<()> {
    if let Some((name, _)) = params.iter().find(|(_, e)| !e.grad.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    let t = params.step() + 1;
    let bc1 = 1.0 - s.beta1.powi(t as i32);
    let bc2 = 1.0 - s.beta2.powi(t as i32);
    for (_, e) in params.iter_mut() {
        let g = e.grad.data();
        let m = e.adam_m.data_mut();
        for (mk, gk) in m.iter_mut().zip(g) {
            *mk = s.beta1 * *mk + (1.0 - s.beta1) * gk;
        }
        let v = e.adam_v.data_mut();
        for (vk, gk) in v.iter_mut().zip(g) {
            *vk = s.beta2 * *vk + (1.0 - s.beta2) * gk * gk;
        }
        let (m, v) = (e.adam_m.data(), e.adam_v.data());
        for (k, w) in e.value.data_mut().iter_mut().enumerate() {
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *w -= s.lr * m_hat / (v_hat.sqrt() + s.eps);
        }
        e.grad.fill(0.0);
    }
    params.set_step(t);
    Ok(())
}
