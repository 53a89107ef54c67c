use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::graph::Gradients;
use super::params::{ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Adam with decoupled weight decay. Parameters that are frozen or received
/// no gradient this step are left untouched.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u32,
    moments: Vec<Option<(Tensor, Tensor)>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f32) {
        self.step += 1;
        let AdamWConfig { beta1, beta2, eps, weight_decay } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        if self.moments.len() < params.len() {
            self.moments.resize(params.len(), None);
        }
        let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
        for id in ids {
            let p = params.get_mut(id);
            if !p.trainable {
                continue;
            }
            let Some(g) = grads.param(id) else { continue };
            let (m, v) = self.moments[id.0]
                .get_or_insert_with(|| (Tensor::zeros(g.raw_dim()), Tensor::zeros(g.raw_dim())));
            Zip::from(&mut p.value).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                *w -= lr * (update + weight_decay * *w);
            });
        }
    }
}
