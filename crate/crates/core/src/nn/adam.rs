use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a fixed list of parameter blocks.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, block_sizes: &[usize]) -> Self {
        Adam {
            config,
            m: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update. Blocks must be passed in the same order
    /// and with the same sizes as at construction.
    pub fn step(&mut self, params: &mut [&mut DenseMatrix], grads: &[&DenseMatrix]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[b], &mut self.v[b]);
            assert_eq!(m.len(), g.data().len());
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Rescale gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut DenseMatrix], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = DenseMatrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]);
        let g = DenseMatrix::from_vec(1, 3, vec![0.3, -7.0, 1e-3]);
        let mut opt = Adam::new(AdamConfig { lr: 0.01, ..Default::default() }, &[3]);
        opt.step(&mut [&mut p], &[&g]);
        let expected = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, b) in p.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = DenseMatrix::from_vec(2, 1, vec![0.25, 4.0]);
        let g = DenseMatrix::zeros(2, 1);
        let mut opt = Adam::new(AdamConfig::default(), &[2]);
        for _ in 0..5 {
            opt.step(&mut [&mut p], &[&g]);
        }
        assert_eq!(p.data(), &[0.25, 4.0]);
    }

    #[test]
    fn quadratic_loss_decreases() {
        // f(w) = sum (w - 3)^2
        let mut p = DenseMatrix::from_vec(1, 4, vec![0.0, 10.0, -5.0, 3.5]);
        let loss = |p: &DenseMatrix| p.data().iter().map(|w| (w - 3.0).powi(2)).sum::<f64>();
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &[4]);
        let mut prev = loss(&p);
        let start = prev;
        for i in 0..300 {
            let g = DenseMatrix::from_vec(1, 4, p.data().iter().map(|w| 2.0 * (w - 3.0)).collect());
            opt.step(&mut [&mut p], &[&g]);
            let cur = loss(&p);
            if i < 20 {
                assert!(cur < prev);
            }
            prev = cur;
        }
        assert!(prev < 1e-2 * start);
    }

    #[test]
    fn clipping_bounds_joint_norm() {
        let mut a = DenseMatrix::from_vec(1, 2, vec![3.0, 0.0]);
        let mut b = DenseMatrix::from_vec(1, 1, vec![4.0]);
        let n = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert!((n - 5.0).abs() < 1e-15);
        assert!((a.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((b.get(0, 0) - 0.8).abs() < 1e-15);
        let n2 = clip_global_norm(&mut [&mut a, &mut b], 5.0);
        assert!((n2 - 1.0).abs() < 1e-12);
        assert!((a.get(0, 0) - 0.6).abs() < 1e-15);
    }
}
