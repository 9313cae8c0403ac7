use super::Real;
use crate::error::{AncError, Result};

/// Dense row-major matrix with a gradient slot of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    grad: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
            grad: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(AncError::Shape {
                op: "tensor",
                left: (rows, cols),
                right: (1, values.len()),
            });
        }
        let grad = vec![T::zero(); values.len()];
        Ok(Self {
            rows,
            cols,
            values,
            grad,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self {
            rows,
            cols,
            grad: vec![T::zero(); values.len()],
            values,
        }
    }

    /// A 1×n tensor.
    pub fn row(values: Vec<T>) -> Self {
        let n = values.len();
        Self::from_vec(1, n, values).expect("row shape always matches")
    }

    pub fn scalar(v: T) -> Self {
        Self::row(vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.values[r * self.cols + c] = v;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn grad(&self) -> &[T] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        &mut self.grad
    }

    pub fn row_slice(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of rows `start..end` (gradient reset).
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.rows);
        let start = start.min(end);
        Self::from_vec(
            end - start,
            self.cols,
            self.values[start * self.cols..end * self.cols].to_vec(),
        )
        .expect("slice shape")
    }

    /// Stacks tensors with equal column counts on top of each other.
    pub fn vstack(parts: &[Tensor<T>]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut values = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(AncError::Shape {
                    op: "vstack",
                    left: (rows, cols),
                    right: p.shape(),
                });
            }
            rows += p.rows;
            values.extend_from_slice(&p.values);
        }
        Self::from_vec(rows, cols, values)
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Converts element type, resetting the gradient.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor::from_vec(
            self.rows,
            self.cols,
            self.values.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        )
        .expect("same shape")
    }
}
