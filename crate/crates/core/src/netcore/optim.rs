use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

/// A parameter tensor and its gradient, addressed by a stable key so moment
/// buffers survive changes in which parameters are trainable.
pub struct ParamMut<'a> {
    pub key: String,
    pub values: &'a mut [f64],
    pub grads: &'a [f64],
}

#[derive(Debug, Clone, Default)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step_count: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step_count: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step(&mut self, params: Vec<ParamMut<'_>>) -> Result<()> {
        let lr = self.config.learning_rate;
        self.step_with_lr(lr, params)
    }

    /// One update at an explicit learning rate (used by schedules).
    pub fn step_with_lr(&mut self, lr: f64, params: Vec<ParamMut<'_>>) -> Result<()> {
        for p in &params {
            if p.values.len() != p.grads.len() {
                return Err(Error::ShapeMismatch {
                    op: "optimizer_step",
                    left: (p.values.len(), 1),
                    right: (p.grads.len(), 1),
                });
            }
        }
        self.step_count += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;
        for p in params {
            let m = self.moments.entry(p.key).or_default();
            if m.first.len() != p.values.len() {
                m.first = vec![0.0; p.values.len()];
                m.second = vec![0.0; p.values.len()];
            }
            for (((w, &g), m1), m2) in p
                .values
                .iter_mut()
                .zip(p.grads)
                .zip(m.first.iter_mut())
                .zip(m.second.iter_mut())
            {
                *w *= decay;
                *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                let m_hat = *m1 / bias1;
                let v_hat = *m2 / bias2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
