use serde::{Deserialize, Serialize};

use super::math::Real;
use super::params::{Gradients, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    lr: f64,
    params: AdamParams,
    t: i32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(tensors: &[Tensor<F>], lr: f64, params: AdamParams) -> Self {
        Adam {
            lr,
            params,
            t: 0,
            m: tensors.iter().map(|t| vec![F::zero(); t.len()]).collect(),
            v: tensors.iter().map(|t| vec![F::zero(); t.len()]).collect(),
        }
    }

    pub fn step(&mut self, tensors: &mut [Tensor<F>], grads: &Gradients<F>) {
        self.t += 1;
        let b1 = F::of(self.params.beta1);
        let b2 = F::of(self.params.beta2);
        let one = F::one();
        let c1 = F::of(1.0 - self.params.beta1.powi(self.t));
        let c2 = F::of(1.0 - self.params.beta2.powi(self.t));
        let lr = F::of(self.lr);
        let eps = F::of(self.params.eps);
        for (((t, g), m), v) in tensors.iter_mut().zip(&grads.bufs).zip(&mut self.m).zip(&mut self.v) {
            for j in 0..t.data.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                t.data[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
