use serde::{Deserialize, Serialize};

use super::ParamMut;
use crate::error::{Error, Result};

/// AdamW hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Moment accumulators for AdamW with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    config: AdamWConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    /// One accumulator pair per parameter tensor of the given sizes.
    pub fn new(config: AdamWConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One AdamW update.
    ///
    /// Decay shrinks each parameter by `lr * weight_decay` of its value before the
    /// bias-corrected Adam step; it never enters the moment estimates. All
    /// gradients are checked before anything is written.
    pub fn adamw_step(&mut self, params: &mut [ParamMut<'_>], lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Argument(format!("learning rate must be positive, got {lr}")));
        }
        if params.len() != self.first.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (t, p) in params.iter().enumerate() {
            if p.value.len() != self.first[t].len() || p.grad.len() != p.value.len() {
                return Err(Error::Dimension(format!(
                    "tensor {t}: accumulator holds {} values, parameter {}, gradient {}",
                    self.first[t].len(),
                    p.value.len(),
                    p.grad.len()
                )));
            }
            if let Some(e) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { tensor: t, element: e });
            }
        }

        self.step += 1;
        let AdamWConfig { beta1, beta2, eps, weight_decay } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let shrink = 1.0 - lr * weight_decay;
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.value[i] = p.value[i] * shrink - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
