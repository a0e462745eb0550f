use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::error::{Error, Result};

/// Adam moments and hyperparameters. A non-zero `weight_decay` gives AdamW
/// (decay decoupled from the gradient moments).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor2>,
    pub v: Vec<Tensor2>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(params: &[Tensor2], lr: f64) -> Self {
        Self {
            m: params.iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    /// One bias-corrected update of every parameter in place.
    pub fn update(&mut self, params: &mut [Tensor2], grads: &[Tensor2]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Argument(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adam",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        for k in 0..params.len() {
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            let p = params[k].data_mut();
            for (i, &gi) in grads[k].data().iter().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] = p[i] * decay - self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::update`].
pub fn adam_step(params: &mut [Tensor2], grads: &[Tensor2], state: &mut AdamState) -> Result<()> {
    state.update(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor2::row_vector(vec![1.5, -2.0])];
        let g = vec![Tensor2::zeros(1, 2)];
        let mut st = AdamState::new(&p, 0.1);
        for _ in 0..5 {
            st.update(&mut p, &g).unwrap();
        }
        assert_eq!(p[0].data(), &[1.5, -2.0]);
    }

    #[test]
    fn decoupled_decay_shrinks_geometrically() {
        let (lr, wd) = (0.01, 0.5);
        let mut p = vec![Tensor2::row_vector(vec![2.0])];
        let g = vec![Tensor2::zeros(1, 1)];
        let mut st = AdamState::new(&p, lr).with_weight_decay(wd);
        for k in 1..=10 {
            st.update(&mut p, &g).unwrap();
            let expect = 2.0 * (1.0 - lr * wd).powi(k);
            assert!((p[0].item() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn converges_on_quadratic() {
        // f(x) = (x - 3)^2, minimum at 3.
        let mut p = vec![Tensor2::scalar(-1.0)];
        let mut st = AdamState::new(&p, 0.05);
        for _ in 0..500 {
            let g = vec![Tensor2::scalar(2.0 * (p[0].item() - 3.0))];
            st.update(&mut p, &g).unwrap();
        }
        assert!((p[0].item() - 3.0).abs() < 1e-3, "{}", p[0].item());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![Tensor2::zeros(2, 2)];
        let mut st = AdamState::new(&p, 0.1);
        assert!(st.update(&mut p, &[Tensor2::zeros(1, 2)]).is_err());
    }
}
