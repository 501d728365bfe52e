use mxr_tensor::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Module, Slot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta2: 0.99, eps: 1e-8, weight_decay: 1e-3 }
    }
}

/// Hyper-parameters for a single update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// 1-based step index used for bias correction.
    pub step: u64,
}

/// One in-place AdamW update of a single tensor. Decay is applied first,
/// then the bias-corrected adaptive step.
pub fn adamw_update<T: Float>(w: &mut [T], g: &[T], m: &mut [T], v: &mut [T], p: &StepParams) {
    let b1 = p.beta1;
    let b2 = p.beta2;
    let c1 = 1.0 - b1.powf(p.step as f64);
    let c2 = 1.0 - b2.powf(p.step as f64);
    let shrink = 1.0 - p.lr * p.weight_decay;
    for i in 0..w.len() {
        let gi = g[i].as_f64();
        let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
        let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
        m[i] = T::cast(mi);
        v[i] = T::cast(vi);
        let decayed = w[i].as_f64() * shrink;
        w[i] = T::cast(decayed - p.lr * (mi / c1) / ((vi / c2).sqrt() + p.eps));
    }
}

/// First and second moments of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub name: String,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

/// AdamW over every trainable parameter of a module, visited in order.
#[derive(Debug, Clone)]
pub struct AdamW<T: Float = f32> {
    pub config: AdamWConfig,
    pub step: u64,
    pub moments: Vec<Moments<T>>,
}

impl<T: Float> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Self {
        Self { config, step: 0, moments: Vec::new() }
    }

    /// Applies one update with the given learning rate and beta1, then
    /// clears gradients.
    pub fn step(&mut self, model: &dyn Module<T>, lr: f64, beta1: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Contract(format!("learning rate {lr} must be positive")));
        }
        let first = self.moments.is_empty();
        let step = self.step + 1;
        let cfg = self.config;
        let mut idx = 0;
        let mut failure = None;
        let moments = &mut self.moments;
        model.visit("", &mut |name, slot| {
            let Slot::Param(p) = slot else { return };
            if !p.trainable() || failure.is_some() {
                return;
            }
            let current = p.get();
            let Some(g) = current.grad() else {
                failure = Some(Error::Contract(format!("parameter {name} has no gradient")));
                return;
            };
            if first {
                let n = current.numel();
                moments.push(Moments { name: name.to_string(), m: vec![T::zero(); n], v: vec![T::zero(); n] });
            }
            let Some(st) = moments.get_mut(idx).filter(|s| s.name == name && s.m.len() == current.numel()) else {
                failure = Some(Error::Integrity(format!("optimizer state does not match parameter {name}")));
                return;
            };
            idx += 1;
            let params = StepParams {
                lr,
                beta1,
                beta2: cfg.beta2,
                eps: cfg.eps,
                weight_decay: if p.decays() { cfg.weight_decay } else { 0.0 },
                step,
            };
            let mut w = current.to_vec();
            adamw_update(&mut w, &g, &mut st.m, &mut st.v, &params);
            if let Err(e) = p.set_data(w) {
                failure = Some(e.into());
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if idx != self.moments.len() {
            return Err(Error::Integrity(format!(
                "optimizer tracks {} parameters, model has {idx}",
                self.moments.len()
            )));
        }
        self.step = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lr: f64, wd: f64) -> StepParams {
        StepParams { lr, beta1: 0.9, beta2: 0.99, eps: 1e-8, weight_decay: wd, step: 1 }
    }

    #[test]
    fn decay_only_with_zero_gradient() {
        let mut w = vec![2.0f64];
        adamw_update(&mut w, &[0.0], &mut [0.0], &mut [0.0], &params(1e-3, 1e-3));
        assert_eq!(w[0], 2.0 * (1.0 - 1e-6));
    }

    #[test]
    fn first_step_hand_value() {
        let mut w = vec![0.0f64];
        adamw_update(&mut w, &[1.0], &mut [0.0], &mut [0.0], &params(0.1, 0.0));
        assert!((w[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }
}
