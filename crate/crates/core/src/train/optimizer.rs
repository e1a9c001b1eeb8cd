//! Adaptive-moment optimizer with optional global-norm gradient clipping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, TensorValue};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        if self.lr <= 0.0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.eps <= 0.0
        {
            return Err(Error::config(format!("invalid optimizer config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    moments: BTreeMap<String, (TensorValue, TensorValue)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Adam { cfg, t: 0, moments: BTreeMap::new() })
    }

    /// One update from the gradients accumulated in `store`, each scaled
    /// by `grad_scale` (1.0 for no clipping).
    pub fn step(&mut self, store: &mut ParamStore, grad_scale: f64) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let moments = &mut self.moments;
        store.update(|name, value, grad| {
            let (m, v) = moments.entry(name.to_string()).or_insert_with(|| {
                let zero = TensorValue::zeros(value.shape().clone());
                (zero.clone(), zero)
            });
            let (m, v) = (m.data_mut(), v.data_mut());
            for ((p, &g0), (mi, vi)) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                let g = g0 * grad_scale;
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        });
    }
}

/// Global L2 norm of all accumulated gradients.
pub fn grad_norm(store: &ParamStore) -> f64 {
    store
        .iter()
        .map(|(_, _, g)| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Scale factor that caps the global gradient norm at `max_norm`.
pub fn clip_scale(store: &ParamStore, max_norm: f64) -> f64 {
    let norm = grad_norm(store);
    if norm > max_norm && norm > 0.0 {
        max_norm / norm
    } else {
        1.0
    }
}
