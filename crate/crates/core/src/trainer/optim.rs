use ndarray::{Array2, Zip};

use super::TrainConfig;

/// Cosine annealing from `lr0` at step 0 to `eta_min` at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64, eta_min: f64) -> f64 {
    let total = total_steps.max(1);
    let progress = step.min(total) as f64 / total as f64;
    eta_min + 0.5 * (lr0 - eta_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Array2<f64>,
    v: Array2<f64>,
    t: u32,
}

impl AdamW {
    pub fn new(shape: (usize, usize), config: &TrainConfig) -> Self {
        Self {
            beta1: config.adam_betas.0,
            beta2: config.adam_betas.1,
            eps: config.eps,
            weight_decay: config.weight_decay,
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, params: &mut Array2<f64>, grads: &Array2<f64>, lr: f64) {
        assert_eq!(params.dim(), grads.dim(), "parameter and gradient shapes differ");
        assert_eq!(params.dim(), self.m.dim(), "optimizer state shape differs");
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let decay = 1.0 - lr * self.weight_decay;
        Zip::from(params)
            .and(grads)
            .and(&mut self.m)
            .and(&mut self.v)
            .for_each(|p, &g, m, v| {
                *p *= decay;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
}
