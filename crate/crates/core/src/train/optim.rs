//! Adam optimizer.

use serde::{Deserialize, Serialize};

use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamSettings {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moments, one moment pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub settings: AdamSettings,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, settings: AdamSettings) -> Self {
        Self { settings, step: 0, m: store.zeros_like(), v: store.zeros_like() }
    }

    /// Applies one update. `grads` is indexed like the store; parameters
    /// without a gradient get `None` and keep their moments.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>]) {
        self.step += 1;
        let AdamSettings { learning_rate: lr, beta1, beta2, eps } = self.settings;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let p = store.get_mut(ParamId(i));
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, (x, &gj)) in p.data_mut().iter_mut().zip(grad.data()).enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                if lr != 0.0 {
                    *x -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
