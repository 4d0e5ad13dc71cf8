use std::collections::HashMap;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named parameters with paired gradients and momentum buffers.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    velocity: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        let id = self.values.len();
        self.grads.push(Tensor::zeros(value.shape().to_vec()));
        self.velocity.push(Tensor::zeros(value.shape().to_vec()));
        self.values.push(value);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Multiplies every accumulated gradient by `factor`.
    pub fn scale_grad(&mut self, factor: f32) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// One step of SGD with heavy-ball momentum:
    /// `v ← μ·v + g`, `θ ← θ − lr·v`, then gradients are zeroed.
    ///
    /// A non-finite gradient aborts the step before any parameter moves.
    pub fn sgd_step(&mut self, lr: f32, momentum: f32) -> Result<()> {
        if let Some(i) = self.grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(self.names[i].clone()));
        }
        for ((value, grad), vel) in self
            .values
            .iter_mut()
            .zip(&mut self.grads)
            .zip(&mut self.velocity)
        {
            for ((p, g), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data_mut().iter_mut())
                .zip(vel.data_mut().iter_mut())
            {
                *v = momentum * *v + *g;
                *p -= lr * *v;
                *g = 0.0;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::is_finite)
    }

    /// `(name, value)` pairs in insertion order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::vector(vec![1.0, -2.0])).unwrap();
        (s, id)
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut s, _) = store();
        assert!(s.add("w", Tensor::scalar(0.0)).is_err());
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let (mut s, id) = store();
        s.grad_mut(id).data_mut().copy_from_slice(&[3.0, 4.0]);
        s.sgd_step(0.0, 0.9).unwrap();
        assert_eq!(s.value(id).data(), &[1.0, -2.0]);
        assert_eq!(s.grad(id).data(), &[0.0, 0.0]);
    }

    #[test]
    fn plain_step_without_momentum() {
        let (mut s, id) = store();
        s.grad_mut(id).data_mut().copy_from_slice(&[0.5, -1.0]);
        s.sgd_step(0.1, 0.0).unwrap();
        assert_eq!(s.value(id).data(), &[1.0 - 0.1 * 0.5, -2.0 + 0.1]);
    }

    #[test]
    fn non_finite_gradient_aborts_with_name() {
        let (mut s, id) = store();
        s.grad_mut(id).data_mut()[1] = f32::NAN;
        match s.sgd_step(0.1, 0.9) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "w"),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.value(id).data(), &[1.0, -2.0]);
    }

    #[test]
    fn quadratic_bowl_decreases_monotonically() {
        // f(θ) = ½ Σ a_k θ_k², gradient a_k θ_k; minimum 0 at the origin.
        let a = [1.0f32, 0.5];
        let (mut s, id) = store();
        let loss = |s: &ParamStore| -> f32 {
            s.value(id)
                .data()
                .iter()
                .zip(a)
                .map(|(t, a)| 0.5 * a * t * t)
                .sum()
        };
        let mut prev = loss(&s);
        for _ in 0..100 {
            let g: Vec<f32> = s
                .value(id)
                .data()
                .iter()
                .zip(a)
                .map(|(t, a)| a * t)
                .collect();
            s.grad_mut(id).data_mut().copy_from_slice(&g);
            s.sgd_step(0.05, 0.5).unwrap();
            let cur = loss(&s);
            assert!(cur < prev, "{cur} !< {prev}");
            prev = cur;
        }
        assert!(prev < 1e-3);
    }
}
