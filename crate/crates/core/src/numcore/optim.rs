use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay:
/// θ ← θ − lr · (m̂ / (√v̂ + eps) + wd · θ).
#[derive(Debug, Clone)]
pub struct AdamW<F> {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(config: AdamWConfig, params: &ParamSet<F>) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|p| vec![F::zero(); p.value.len()]).collect(),
            second: params.iter().map(|p| vec![F::zero(); p.value.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet<F>, grads: &[Tensor<F>]) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::shape(format!(
                "adamw: {} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "adamw: gradient {:?} for parameter {} of {:?}",
                    g.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bias1 = 1.0 - c.beta1.powf(t);
        let bias2 = 1.0 - c.beta2.powf(t);
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let (lr, eps, wd) = (F::of(c.lr), F::of(c.eps), F::of(c.weight_decay));
        let (bias1, bias2) = (F::of(bias1), F::of(bias2));

        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if !p.trainable {
                continue;
            }
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for (j, theta) in p.value.data_mut().iter_mut().enumerate() {
                let grad = g.data()[j];
                m[j] = b1 * m[j] + (F::one() - b1) * grad;
                v[j] = b2 * v[j] + (F::one() - b2) * grad * grad;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                *theta -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *theta);
            }
        }
        Ok(())
    }
}
