use serde::{Deserialize, Serialize};

use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|n| (vec![T::zero(); n], vec![T::zero(); n]))
            .unzip();
        Self { m, v, step: 0 }
    }

    /// One bias-corrected Adam update of every tensor.
    pub fn step(&mut self, cfg: &AdamConfig, params: Vec<&mut Vec<T>>, grads: Vec<&Vec<T>>) {
        assert_eq!(params.len(), self.m.len(), "parameter tensor count");
        assert_eq!(grads.len(), self.m.len(), "gradient tensor count");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let (ob1, ob2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
        let (ic1, ic2) = (T::of(1.0 / c1), T::of(1.0 / c2));
        let (lr, eps) = (T::of(cfg.learning_rate), T::of(cfg.epsilon));
        for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + ob1 * gi;
                v[i] = b2 * v[i] + ob2 * gi * gi;
                let mh = m[i] * ic1;
                let vh = v[i] * ic2;
                p[i] = p[i] - lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}
