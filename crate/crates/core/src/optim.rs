//! Parameter optimizers and learning-rate schedules for supervised training.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over the run.
    Cosine,
}

impl Schedule {
    /// Rate for `epoch` out of `epochs`.
    pub fn rate(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::Cosine => 0.5 * base * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs.max(1) as f64).cos()),
        }
    }
}

/// Adam with optional L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(sizes: impl IntoIterator<Item = usize>, weight_decay: f64) -> Adam {
        let m: Vec<Vec<f64>> = sizes.into_iter().map(|n| vec![0.0; n]).collect();
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, v: m.clone(), m }
    }

    pub fn step<'a>(&mut self, lr: f64, params: impl IntoIterator<Item = &'a mut Vec<f64>>, grads: &[Vec<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i] + self.weight_decay * p[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(Schedule::Cosine.rate(0.01, 0, 10), 0.01);
        assert!(Schedule::Cosine.rate(0.01, 10, 10).abs() < 1e-18);
        assert!((Schedule::Cosine.rate(0.01, 5, 10) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = [vec![1.0, -1.0]];
        let mut opt = Adam::new([2], 0.0);
        opt.step(0.1, p.iter_mut(), &[vec![3.0, -0.5]]);
        // eps shifts the step by about lr * eps / |g|.
        assert!((p[0][0] - 0.9).abs() < 1e-7 && (p[0][1] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = [vec![5.0]];
        let mut opt = Adam::new([1], 0.0);
        for _ in 0..2000 {
            let g = vec![vec![2.0 * (p[0][0] - 1.0)]];
            opt.step(0.05, p.iter_mut(), &g);
        }
        assert!((p[0][0] - 1.0).abs() < 1e-3);
    }
}
