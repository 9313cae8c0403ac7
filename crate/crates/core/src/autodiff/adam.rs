use serde::{Deserialize, Serialize};

use super::{Real, Tape, Tensor, Var};
use crate::error::{AncError, Result};

/// A named trainable tensor together with its ADAM moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T = f32> {
    name: String,
    tensor: Tensor<T>,
    adam_m: Vec<T>,
    adam_v: Vec<T>,
    step_count: u64,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, tensor: Tensor<T>) -> Self {
        let n = tensor.len();
        Self {
            name: name.into(),
            tensor,
            adam_m: vec![T::zero(); n],
            adam_v: vec![T::zero(); n],
            step_count: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor<T> {
        &mut self.tensor
    }

    pub fn values(&self) -> &[T] {
        self.tensor.values()
    }

    pub fn len(&self) -> usize {
        self.tensor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensor.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[T] {
        &self.adam_m
    }

    pub fn second_moment(&self) -> &[T] {
        &self.adam_v
    }

    /// Records the parameter on `tape` as a single row, trainable or not.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Var {
        let row = Tensor::from_vec(1, self.len(), self.tensor.values().to_vec()).expect("row");
        if trainable {
            tape.variable(&row)
        } else {
            tape.constant(&row)
        }
    }

    /// Adds the gradient `tape` holds for `var` into this parameter's slot.
    pub fn accumulate_grad(&mut self, tape: &Tape<T>, var: Var) {
        if let Some(g) = tape.grad(var) {
            for (s, &x) in self.tensor.grad_mut().iter_mut().zip(g) {
                *s = *s + x;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.tensor.zero_grad();
    }

    pub fn cast<U: Real>(&self) -> Parameter<U> {
        Parameter::new(self.name.clone(), self.tensor.cast())
    }
}

/// ADAM hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    /// One bias-corrected ADAM update from the gradient currently stored in
    /// `p`. The gradient itself is left in place.
    pub fn step<T: Real>(&self, p: &mut Parameter<T>) -> Result<()> {
        if p.tensor.grad().iter().any(|g| !g.is_finite()) {
            return Err(AncError::Numeric(format!("gradient of parameter '{}'", p.name)));
        }
        p.step_count += 1;
        let t = p.step_count as i32;
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        let corr1 = T::from_f64(1.0 - self.beta1.powi(t));
        let corr2 = T::from_f64(1.0 - self.beta2.powi(t));
        let lr = T::from_f64(self.learning_rate);
        let eps = T::from_f64(self.eps);

        let Parameter {
            tensor,
            adam_m,
            adam_v,
            ..
        } = p;
        let grad: Vec<T> = tensor.grad().to_vec();
        for (((x, m), v), g) in tensor
            .values_mut()
            .iter_mut()
            .zip(adam_m.iter_mut())
            .zip(adam_v.iter_mut())
            .zip(grad)
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *x = *x - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
