//! Adam optimizer with bias correction, written against parallel tensor
//! lists so it drives both the full scorer and scalar toy problems.

use super::{Scalar, ScorerModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Adam<F> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    /// Completed steps.
    t: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    /// Fresh optimizer state for tensors of the given lengths.
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, lens: &[usize]) -> Result<Self> {
        // NaN fails every guard below, so NaN hyperparameters are rejected.
        if lr.is_nan() || lr <= 0.0 {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        let bad_beta = |b: f64| b.is_nan() || b <= 0.0 || b >= 1.0;
        if bad_beta(beta1) || bad_beta(beta2) {
            return Err(Error::Config(format!(
                "Adam betas ({beta1}, {beta2}) must lie in (0, 1)"
            )));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::Config(format!("Adam epsilon {eps} must be positive")));
        }
        Ok(Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: lens.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: lens.iter().map(|&n| vec![F::zero(); n]).collect(),
        })
    }

    /// Optimizer for a model's trainable parameters, hyperparameters taken
    /// from its config.
    pub fn for_model(model: &ScorerModel<F>) -> Result<Self> {
        let c = &model.config;
        let lens: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
        Self::new(
            c.learning_rate,
            c.adam_beta1,
            c.adam_beta2,
            c.adam_epsilon,
            &lens,
        )
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update over parallel parameter/gradient tensor lists.
    pub fn step_slices(&mut self, mut params: Vec<&mut Vec<F>>, grads: &[&[F]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let t = self.t as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        let b1 = F::from_f64c(self.beta1);
        let nb1 = F::from_f64c(1.0 - self.beta1);
        let b2 = F::from_f64c(self.beta2);
        let nb2 = F::from_f64c(1.0 - self.beta2);
        let inv_c1 = F::from_f64c(1.0 / c1);
        let inv_c2 = F::from_f64c(1.0 / c2);
        let lr = F::from_f64c(self.lr);
        let eps = F::from_f64c(self.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::LengthMismatch(format!(
                    "optimizer tensor of {} elements, got parameter {} / gradient {}",
                    m.len(),
                    p.len(),
                    g.len()
                )));
            }
            for i in 0..m.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + nb1 * gi;
                v[i] = b2 * v[i] + nb2 * gi * gi;
                let m_hat = m[i] * inv_c1;
                let v_hat = v[i] * inv_c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// One update of a model from a gradient accumulator of the same shape.
    pub fn step(&mut self, model: &mut ScorerModel<F>, grads: &ScorerModel<F>) -> Result<()> {
        let g = grads.param_slices();
        self.step_slices(model.param_slices_mut(), &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{init_model, tiny_config};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_quadratic_converges_to_minimum() {
        // min (w - 3)^2 from w = 0.
        let mut adam: Adam<f64> = Adam::new(0.1, 0.9, 0.999, 1e-8, &[1]).unwrap();
        let mut w = vec![0.0f64];
        for _ in 0..2000 {
            let g = vec![2.0 * (w[0] - 3.0)];
            adam.step_slices(vec![&mut w], &[&g]).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 1e-3, "w = {}", w[0]);
        assert_eq!(adam.steps(), 2000);
    }

    #[test]
    fn first_step_size_is_learning_rate_regardless_of_gradient_scale() {
        for &g0 in &[1e-3, 1.0, 1e3] {
            let mut adam: Adam<f64> = Adam::new(0.05, 0.9, 0.999, 1e-8, &[1]).unwrap();
            let mut w = vec![10.0f64];
            adam.step_slices(vec![&mut w], &[&vec![g0]]).unwrap();
            // After bias correction the first update is lr·g/(|g| + eps').
            assert!(
                ((10.0 - w[0]) - 0.05).abs() < 1e-6,
                "g0 = {g0}, step = {}",
                10.0 - w[0]
            );
        }
    }

    #[test]
    fn model_step_changes_every_parameter_with_nonzero_gradient() {
        let cfg = tiny_config();
        let mut model = init_model::<f64, _>(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let before = model.clone();
        let mut grads = model.zeros_like();
        for s in grads.param_slices_mut() {
            for v in s.iter_mut() {
                *v = 0.5;
            }
        }
        let mut adam = Adam::for_model(&model).unwrap();
        adam.step(&mut model, &grads).unwrap();
        for (a, b) in model.param_slices().iter().zip(before.param_slices()) {
            for (&x, &y) in a.iter().zip(b.iter()) {
                assert!(x < y, "positive gradient must decrease the parameter");
            }
        }
        // Running stats are not parameters and must be untouched.
        assert_eq!(model.state_slices(), before.state_slices());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut adam: Adam<f64> = Adam::new(0.1, 0.9, 0.999, 1e-8, &[2]).unwrap();
        let mut w = vec![0.0f64; 3];
        let g = vec![1.0f64; 2];
        assert!(adam.step_slices(vec![&mut w], &[&g]).is_err());
        let mut w2 = vec![0.0f64; 2];
        let g2 = vec![1.0f64; 2];
        assert!(adam
            .step_slices(vec![&mut w2, &mut g2.clone()], &[&g2])
            .is_err());
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        assert!(Adam::<f64>::new(0.0, 0.9, 0.999, 1e-8, &[1]).is_err());
        assert!(Adam::<f64>::new(0.1, 1.0, 0.999, 1e-8, &[1]).is_err());
        assert!(Adam::<f64>::new(0.1, 0.9, 0.999, 0.0, &[1]).is_err());
    }
}
