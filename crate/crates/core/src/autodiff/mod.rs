//! Reverse-mode differentiation over dense row-major 2-D arrays.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Trainable
//! state lives outside the tape in [`Parameter`]s; a forward pass copies them
//! onto the tape as leaves, and after [`Tape::backward`] the caller pulls the
//! leaf gradients back with [`Parameter::accumulate_grad`].
//!
//! Everything is generic over [`Real`] so the same layer code runs in `f32`
//! for training and in `f64` for finite-difference checks.

mod adam;
mod tape;
mod tensor;

pub use adam::{AdamConfig, Parameter};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating point scalar usable on a tape.
pub trait Real: Float + Default + Debug + Display + Sum + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
