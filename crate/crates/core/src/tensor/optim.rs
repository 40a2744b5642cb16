//! AdamW with decoupled weight decay.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{MatError, Result};
use crate::tensor::graph::GradMap;
use crate::tensor::param::ParamStore;
use crate::tensor::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Optimizer state: per-parameter first/second moment accumulators plus the
/// step count. Decay is decoupled (applied to the parameter, never to the
/// moment estimates); frozen parameters are never touched.
pub struct AdamW<S> {
    pub cfg: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Vec<S>, Vec<S>)>,
    /// When set, only these parameters are updated; every listed parameter
    /// must receive a gradient each step (strict mode). When unset, the
    /// trainable set is every unfrozen parameter in the store.
    trainable: Option<BTreeSet<String>>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(cfg: AdamConfig) -> Self {
        AdamW {
            cfg,
            step: 0,
            moments: BTreeMap::new(),
            trainable: None,
        }
    }

    pub fn with_trainable(cfg: AdamConfig, names: impl IntoIterator<Item = String>) -> Self {
        AdamW {
            cfg,
            step: 0,
            moments: BTreeMap::new(),
            trainable: Some(names.into_iter().collect()),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// One optimizer step. Errors if a trainable parameter is missing its
    /// gradient, which usually means a wiring bug in the forward pass.
    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &GradMap<S>) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        let names: Vec<String> = store
            .iter()
            .filter(|p| !p.frozen)
            .filter(|p| {
                self.trainable
                    .as_ref()
                    .map(|set| set.contains(&p.name))
                    .unwrap_or(true)
            })
            .map(|p| p.name.clone())
            .collect();
        for name in names {
            let grad = grads
                .get(&name)
                .ok_or_else(|| MatError::MissingGradient(name.clone()))?;
            let p = store.get_mut(&name)?;
            if grad.shape() != p.tensor.shape() {
                return Err(MatError::shape(p.tensor.shape(), grad.shape(), "optimizer grad"));
            }
            let n = p.tensor.numel();
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![S::ZERO; n], vec![S::ZERO; n]));
            let (b1, b2) = (S::from_f64(self.cfg.beta1), S::from_f64(self.cfg.beta2));
            let one_m_b1 = S::from_f64(1.0 - self.cfg.beta1);
            let one_m_b2 = S::from_f64(1.0 - self.cfg.beta2);
            let decay = S::from_f64(1.0 - self.cfg.lr * self.cfg.weight_decay);
            let lr_bc = S::from_f64(self.cfg.lr / bc1);
            let inv_sqrt_bc2 = S::from_f64(1.0 / bc2.sqrt());
            let eps = S::from_f64(self.cfg.eps);
            let data = p.tensor.data_mut();
            let gd = grad.data();
            for i in 0..n {
                m[i] = b1 * m[i] + one_m_b1 * gd[i];
                v[i] = b2 * v[i] + one_m_b2 * gd[i] * gd[i];
                // p *= 1 - lr*wd; p -= lr * mhat / (sqrt(vhat) + eps)
                data[i] *= decay;
                let denom = (v[i] * inv_sqrt_bc2 * inv_sqrt_bc2).sqrt() + eps;
                data[i] -= lr_bc * m[i] / denom;
            }
        }
        Ok(())
    }
}
