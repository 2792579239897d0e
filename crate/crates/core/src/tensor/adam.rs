use super::matrix::Matrix;
use crate::error::{Result, SclError};

/// Adam with bias correction over a fixed list of parameter tensors.
/// One shared step counter; moment buffers are allocated per tensor at
/// construction and must keep matching the parameter shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    shapes: Vec<(usize, usize)>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self::with_hyperparams(lr, 0.9, 0.999, 1e-8, shapes)
    }

    pub fn with_hyperparams(
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        shapes: &[(usize, usize)],
    ) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        assert!((0.0..1.0).contains(&beta1), "beta1 must be in [0, 1)");
        assert!((0.0..1.0).contains(&beta2), "beta2 must be in [0, 1)");
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            shapes: shapes.to_vec(),
            m: shapes.iter().map(|&(r, c)| vec![0.0; r * c]).collect(),
            v: shapes.iter().map(|&(r, c)| vec![0.0; r * c]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One optimizer step over every tensor. `params[i]` is updated in place
    /// from `grads[i]`.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        if params.len() != self.shapes.len() || grads.len() != self.shapes.len() {
            return Err(SclError::contract(format!(
                "adam step expects {} tensors, got {} params / {} grads",
                self.shapes.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.shapes[i] || g.shape() != self.shapes[i] {
                return Err(SclError::shape("adam_step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut state = AdamState::new(1e-3, &[(1, 1)]);
        let mut p = Matrix::zeros(1, 1);
        let g = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        state.step(&mut [&mut p], &[&g]).unwrap();
        // bias-corrected first step is -lr * g/(|g| + eps) ~ -lr
        assert!((p.get(0, 0) + 1e-3).abs() < 1e-6);
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut state = AdamState::new(1e-2, &[(2, 2)]);
        let mut p = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let orig = p.clone();
        let g = Matrix::zeros(2, 2);
        for _ in 0..5 {
            state.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert_eq!(p, orig);
    }

    // Independent reference implementation, kept deliberately naive.
    fn adam_oracle(mut w: f64, lr: f64, steps: usize, grad: impl Fn(f64) -> f64) -> f64 {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=steps {
            let g = grad(w);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        w
    }

    #[test]
    fn matches_reference_on_quadratic() {
        // f(w) = w^2, grad = 2w, from w = 1
        let expected = adam_oracle(1.0, 0.05, 10, |w| 2.0 * w);
        let mut state = AdamState::new(0.05, &[(1, 1)]);
        let mut p = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        for _ in 0..10 {
            let g = Matrix::from_vec(1, 1, vec![2.0 * p.get(0, 0)]).unwrap();
            state.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert!((p.get(0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut state = AdamState::new(1e-2, &[(1, 3)]);
            let mut p = Matrix::from_vec(1, 3, vec![0.3, -0.7, 1.1]).unwrap();
            for s in 0..20 {
                let g = Matrix::from_vec(1, 3, vec![0.1 * s as f64, -0.2, 0.05]).unwrap();
                state.step(&mut [&mut p], &[&g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = AdamState::new(1e-3, &[(2, 2)]);
        let mut p = Matrix::zeros(2, 2);
        let g = Matrix::zeros(2, 3);
        assert!(state.step(&mut [&mut p], &[&g]).is_err());
    }
}
