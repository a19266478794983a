//! Named trainable parameters with shape-matched gradient buffers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::scalar::Scalar;

/// Handle into a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Parameter<S> {
    pub name: String,
    pub value: Matrix<S>,
    pub grad: Matrix<S>,
}

/// Owns every trainable parameter of a model, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<S> {
    params: Vec<Parameter<S>>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<S>) -> ParamId {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    /// Glorot/Xavier uniform init in ±sqrt(6 / (fan_in + fan_out)).
    ///
    /// Samples are drawn as f64 and narrowed, so f32 and f64 models built from
    /// the same seed share the same underlying draw sequence.
    pub fn add_xavier(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| S::from_f64(rng.random_range(-bound..bound)))
            .collect();
        self.add(name, Matrix::from_vec(rows, cols, data).expect("sized"))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Matrix::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<S> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix<S> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix<S> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix<S> {
        &self.params[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<S>> {
        self.params.iter()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = S::ZERO;
            }
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, delta: &Matrix<S>) -> Result<()> {
        let p = &mut self.params[id.0];
        if !p.grad.same_shape(delta) {
            return Err(Error::shape(
                "gradient accumulation",
                p.grad.shape_string(),
                delta.shape_string(),
            ));
        }
        for (g, &d) in p.grad.data_mut().iter_mut().zip(delta.data()) {
            *g += d;
        }
        Ok(())
    }

    /// Copies of all parameter values, for best-epoch snapshots.
    pub fn snapshot_values(&self) -> Vec<Matrix<S>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore_values(&mut self, snapshot: &[Matrix<S>]) -> Result<()> {
        if snapshot.len() != self.params.len() {
            return Err(Error::usage(format!(
                "snapshot has {} parameters, model has {}",
                snapshot.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            if !p.value.same_shape(v) {
                return Err(Error::shape(
                    "snapshot restore",
                    p.value.shape_string(),
                    v.shape_string(),
                ));
            }
            p.value = v.clone();
        }
        Ok(())
    }

    /// Widened copy used by the finite-difference checker.
    pub fn to_f64(&self) -> ParamSet<f64> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.to_f64(),
                    grad: p.grad.to_f64(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn xavier_bound_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = ParamSet::<f64>::new();
        let id = params.add_xavier("w", 10, 6, &mut rng);
        let bound = (6.0f64 / 16.0).sqrt();
        for &v in params.value(id).data() {
            assert!(v.abs() <= bound);
        }
    }

    #[test]
    fn same_seed_same_init_across_precisions() {
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let mut p32 = ParamSet::<f32>::new();
        let mut p64 = ParamSet::<f64>::new();
        let a = p32.add_xavier("w", 3, 4, &mut r1);
        let b = p64.add_xavier("w", 3, 4, &mut r2);
        for (x, y) in p32.value(a).data().iter().zip(p64.value(b).data()) {
            assert_eq!(*x, *y as f32);
        }
    }

    #[test]
    fn grads_zeroed_and_accumulated() {
        let mut params = ParamSet::<f64>::new();
        let id = params.add("w", Matrix::row(&[1.0, 2.0]));
        params
            .accumulate_grad(id, &Matrix::row(&[0.5, 0.5]))
            .unwrap();
        params
            .accumulate_grad(id, &Matrix::row(&[0.25, -0.5]))
            .unwrap();
        assert_eq!(params.grad(id).data(), &[0.75, 0.0]);
        params.zero_grads();
        assert_eq!(params.grad(id).data(), &[0.0, 0.0]);
    }
}
