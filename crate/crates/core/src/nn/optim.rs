use serde::{Deserialize, Serialize};

use super::params::ParamStore;

/// Stochastic gradient descent with momentum and L2 weight decay folded
/// into the gradient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(store: &ParamStore, lr: f32, momentum: f32, weight_decay: f32) -> Self {
        Sgd { lr, momentum, weight_decay, velocity: store.zeros_like() }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f32>]) {
        for ((w, g), v) in store.values.iter_mut().zip(grads).zip(&mut self.velocity) {
            for i in 0..w.len() {
                let d = g[i] + self.weight_decay * w[i];
                v[i] = self.momentum * v[i] + d;
                w[i] -= self.lr * v[i];
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f32) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: store.zeros_like(), v: store.zeros_like() }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f32>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((w, g), m), v) in store.values.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..w.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                w[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}
