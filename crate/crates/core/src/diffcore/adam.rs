use alloc::vec::Vec;

use super::{DiffError, Tensor};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(1e-4)
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every parameter. Moment buffers are created lazily on the first
    /// call and must keep matching the parameter shapes afterwards.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), DiffError> {
        if params.len() != grads.len() {
            return Err(DiffError::ShapeMismatch {
                op: "adam_step",
                lhs: alloc::vec![params.len()],
                rhs: alloc::vec![grads.len()],
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(DiffError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| alloc::vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(DiffError::ShapeMismatch {
                op: "adam_step",
                lhs: self.first.iter().map(Vec::len).collect(),
                rhs: params.iter().map(Tensor::len).collect(),
            });
        }

        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(self.beta1, t);
        let bc2 = 1.0 - libm::pow(self.beta2, t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(0.1);
        let mut p = [Tensor::row(&[1.0, -2.0, 3.5])];
        let g = [Tensor::zeros(&[1, 3])];
        for _ in 0..5 {
            adam.step(&mut p, &g).unwrap();
        }
        assert_eq!(p[0].data(), &[1.0, -2.0, 3.5]);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = 1, v_hat = 1 => delta = lr / (1 + eps)
        let mut adam = Adam::new(0.1);
        let mut p = [Tensor::scalar(0.0)];
        adam.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        assert_eq!(p[0].item(), -0.1 / (1.0 + 1e-8));
    }

    #[test]
    fn identical_params_stay_identical() {
        let mut adam = Adam::new(0.01);
        let mut p = [Tensor::scalar(0.3), Tensor::scalar(0.3)];
        for i in 0..20 {
            let g = libm::sin(i as f64 * 0.7);
            adam.step(&mut p, &[Tensor::scalar(g), Tensor::scalar(g)]).unwrap();
            assert_eq!(p[0].item().to_bits(), p[1].item().to_bits());
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut adam = Adam::new(0.01);
        let mut p = [Tensor::zeros(&[2, 2])];
        let err = adam.step(&mut p, &[Tensor::zeros(&[4])]).unwrap_err();
        assert!(matches!(err, DiffError::ShapeMismatch { .. }));
    }
}
