//! Adam with bias correction over a flat list of parameter tensors.

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, invalid_arg, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay (AdamW style); 0 disables it.
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables it.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: None,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid_arg("lr", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(invalid_arg("beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid_arg("beta2", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid_arg("adam_eps", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(invalid_arg("weight_decay", "must be non-negative"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(invalid_arg("clip_norm", "must be positive"));
            }
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(dim_mismatch(
                "adam_step",
                format!(
                    "state has {} tensors, got {} params and {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(dim_mismatch(
                    "adam_step",
                    format!("tensor {i}: expected {} entries", self.m[i].len()),
                ));
            }
        }

        let c = self.config;
        let scale = match c.clip_norm {
            Some(max) => {
                let total: f64 = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>().sqrt();
                if total > max {
                    max / total
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        self.step += 1;
        let t = self.step as i32;
        let corr1 = 1.0 - c.beta1.powi(t);
        let corr2 = 1.0 - c.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.len() {
                let gj = g[j] * scale;
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let m_hat = m[j] / corr1;
                let v_hat = v[j] / corr2;
                if c.weight_decay > 0.0 {
                    p[j] -= c.lr * c.weight_decay * p[j];
                }
                p[j] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
