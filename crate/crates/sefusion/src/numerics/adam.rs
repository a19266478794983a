//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::params::ParamSet;
use crate::numerics::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Per-parameter first/second-moment accumulators plus the step counter.
pub struct AdamState<S> {
    config: AdamConfig,
    first: Vec<Matrix<S>>,
    second: Vec<Matrix<S>>,
    step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ParamSet<S>, config: AdamConfig) -> Self {
        let first = params
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        let second = params
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        AdamState {
            config,
            first,
            second,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over every parameter, consuming current gradients.
    pub fn step(&mut self, params: &mut ParamSet<S>) -> Result<()> {
        if self.first.len() != params.len() {
            return Err(Error::usage(format!(
                "optimizer state tracks {} parameters, model has {}",
                self.first.len(),
                params.len()
            )));
        }
        self.step += 1;
        let b1 = S::from_f64(self.config.beta1);
        let b2 = S::from_f64(self.config.beta2);
        let lr = S::from_f64(self.config.learning_rate);
        let eps = S::from_f64(self.config.epsilon);
        let bc1 = S::ONE - b1.powi(self.step as i32);
        let bc2 = S::ONE - b2.powi(self.step as i32);

        let ids: Vec<_> = params.ids().collect();
        for (idx, id) in ids.into_iter().enumerate() {
            let grad = params.grad(id).clone();
            let m = &mut self.first[idx];
            let v = &mut self.second[idx];
            if !m.same_shape(&grad) {
                return Err(Error::shape(
                    "adam state",
                    m.shape_string(),
                    grad.shape_string(),
                ));
            }
            let value = params.value_mut(id);
            for i in 0..grad.len() {
                let g = grad.data()[i];
                let mi = b1 * m.data()[i] + (S::ONE - b1) * g;
                let vi = b2 * v.data()[i] + (S::ONE - b2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_exact_noop() {
        let mut params = ParamSet::<f64>::new();
        let id = params.add("w", Matrix::row(&[1.5, -2.25, 0.0]));
        let before = params.value(id).clone();
        let mut adam = AdamState::new(&params, AdamConfig::default());
        adam.step(&mut params).unwrap();
        assert_eq!(params.value(id), &before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn single_step_matches_closed_form() {
        // From zero state, m̂ = g and v̂ = g², so the update is exactly
        // −lr · g / (|g| + ε) per element.
        let cfg = AdamConfig::default();
        let g = [2.0f64, -0.5, 1e-3];
        let start = [1.0f64, 1.0, 1.0];
        let mut params = ParamSet::<f64>::new();
        let id = params.add("w", Matrix::row(&start));
        params.accumulate_grad(id, &Matrix::row(&g)).unwrap();
        let mut adam = AdamState::new(&params, cfg);
        adam.step(&mut params).unwrap();
        for i in 0..3 {
            let expected = start[i] - cfg.learning_rate * g[i] / (g[i].abs() + cfg.epsilon);
            assert!(
                (params.value(id).get(0, i) - expected).abs() < 1e-15,
                "element {i}"
            );
            // Direction is −sign(g)·lr up to the ε nudge.
            let moved = params.value(id).get(0, i) - start[i];
            assert_eq!(moved.signum(), -g[i].signum());
            assert!((moved.abs() - cfg.learning_rate).abs() < cfg.learning_rate * 1e-3);
        }
    }

    #[test]
    fn two_steps_reduce_scalar_quadratic() {
        // f(w) = (w − 3)², df/dw = 2(w − 3).
        let loss = |w: f64| (w - 3.0) * (w - 3.0);
        let mut params = ParamSet::<f64>::new();
        let id = params.add("w", Matrix::row(&[0.0]));
        let mut adam = AdamState::new(&params, AdamConfig::with_learning_rate(0.1));
        let initial = loss(params.value(id).get(0, 0));
        for _ in 0..2 {
            let w = params.value(id).get(0, 0);
            params.zero_grads();
            params
                .accumulate_grad(id, &Matrix::row(&[2.0 * (w - 3.0)]))
                .unwrap();
            adam.step(&mut params).unwrap();
        }
        assert!(loss(params.value(id).get(0, 0)) < initial);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn step_counter_increments_by_one() {
        let mut params = ParamSet::<f32>::new();
        params.add("w", Matrix::row(&[1.0f32]));
        let mut adam = AdamState::new(&params, AdamConfig::default());
        for expected in 1..=5 {
            adam.step(&mut params).unwrap();
            assert_eq!(adam.step_count(), expected);
        }
    }
}
