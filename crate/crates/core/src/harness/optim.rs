use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::{OptimizerConfig, Schedule};
use crate::autograd::Gradients;
use crate::nn::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first: Vec<Array2<f64>>,
    pub second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, cfg: &OptimizerConfig) -> Self {
        let zeros: Vec<Array2<f64>> = params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn update(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (i, p) in params.iter_mut().enumerate() {
            let g = &grads.grads[i];
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            ndarray::Zip::from(&mut p.value)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *w -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}

/// Learning rate at a 0-based step: linear warmup over the first
/// `warmup_fraction` of `total_steps`, then constant or linearly decaying.
pub fn learning_rate(base: f64, step: usize, total_steps: usize, cfg: &OptimizerConfig) -> f64 {
    let warmup = (cfg.warmup_fraction * total_steps as f64).ceil() as usize;
    if step < warmup {
        return base * (step + 1) as f64 / warmup as f64;
    }
    match cfg.schedule {
        Schedule::Constant => base,
        Schedule::LinearDecay => {
            let remaining = total_steps.saturating_sub(warmup).max(1);
            let done = (step - warmup) as f64 / remaining as f64;
            base * (1.0 - done).max(0.0)
        }
    }
}
