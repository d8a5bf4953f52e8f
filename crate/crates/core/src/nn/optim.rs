use std::f64::consts::PI;

use super::{Params, Tensor};

/// AdamW with bias correction and decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamW {
    pub fn new(params: &Params, weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut Params, grads: &[Tensor], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, theta) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (k, p) in theta.data_mut().iter_mut().enumerate() {
                *p *= 1.0 - lr * self.weight_decay;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Cosine annealing from `base_lr` at step 0 to `min_lr` at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64, min_lr: f64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    let progress = step.min(total_steps) as f64 / total_steps as f64;
    min_lr + 0.5 * (base_lr - min_lr) * (1.0 + libm::cos(PI * progress))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Params {
        let mut p = Params::new();
        p.push("theta", Tensor::filled(1, 1, v));
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        let mut opt = AdamW::new(&p, 0.0);
        opt.step(&mut p, &[Tensor::filled(1, 1, 1.0)], 0.1);
        assert!((p.tensor(0).get(0, 0) - 0.9).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = scalar(1.25);
        let mut opt = AdamW::new(&p, 0.0);
        for _ in 0..3 {
            opt.step(&mut p, &[Tensor::zeros(1, 1)], 0.1);
        }
        assert_eq!(p.tensor(0).get(0, 0), 1.25);
    }

    #[test]
    fn decoupled_decay() {
        let mut p = scalar(2.0);
        let mut opt = AdamW::new(&p, 0.01);
        opt.step(&mut p, &[Tensor::zeros(1, 1)], 0.1);
        assert!((p.tensor(0).get(0, 0) - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-3, 1e-5), 1e-3);
        assert!((cosine_lr(100, 100, 1e-3, 1e-5) - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(50, 100, 1e-3, 1e-5) - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
    }
}
