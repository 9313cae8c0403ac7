//! Projection, dot-product and inverse-projection layers, the parameter-free
//! transform that merges two branches, and the ±1 ↔ bit codec.
//!
//! Batched values on a tape are flattened: a batch of `R` signals of length
//! `N_b` is an `R×N_b` tensor, and a batch of `R` projected `N_b×N_w`
//! matrices is `R×(N_b·N_w)` with each matrix stored row-major in one row.
//! Every layer output passes through `tanh`, the transform included.

use rand::Rng;

use crate::autodiff::{Parameter, Real, Tape, Tensor, Var};
use crate::bits::BitVector;
use crate::error::{AncError, Result};

/// Default half-width of the uniform weight initialization. Biases start
/// at zero.
pub const INIT_SCALE: f64 = 3.0;

fn uniform_tensor<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(rows, cols, |_, _| {
        T::from_f64(if scale > 0.0 { rng.gen_range(-scale..scale) } else { 0.0 })
    })
}

fn check_pair<T: Real>(op: &'static str, w: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if w.shape() != b.shape() {
        return Err(AncError::Shape {
            op,
            left: w.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Whether a parameter is recorded as trainable when bound to a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Trainable,
    Frozen,
}

impl Mode {
    fn trainable(self) -> bool {
        self == Mode::Trainable
    }
}

/// `X_W[i,j] = x[i]·w[j] + b[j]`, lifting a length-`N_b` signal to `N_b×N_w`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionLayer<T = f32> {
    w: Parameter<T>,
    b: Parameter<T>,
}

/// `X_d = X ⊙ W + B` with `W`, `B` of shape `N_b×N_w`.
#[derive(Clone, Debug, PartialEq)]
pub struct DotProductLayer<T = f32> {
    w: Parameter<T>,
    b: Parameter<T>,
}

/// `y[i] = Σ_j (X[i,j]·W[i,j] + B[i,j])`, reducing `N_b×N_w` to `N_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseProjectionLayer<T = f32> {
    w: Parameter<T>,
    b: Parameter<T>,
}

impl<T: Real> ProjectionLayer<T> {
    pub fn new(name: &str, w: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        check_pair("projection", &w, &b)?;
        if w.rows() != 1 {
            return Err(AncError::Shape {
                op: "projection",
                left: w.shape(),
                right: (1, w.len()),
            });
        }
        Ok(Self {
            w: Parameter::new(format!("{name}.w"), w),
            b: Parameter::new(format!("{name}.b"), b),
        })
    }

    pub fn random<R: Rng + ?Sized>(name: &str, n_proj: usize, rng: &mut R) -> Self {
        Self::random_scaled(name, n_proj, INIT_SCALE, rng)
    }

    /// Weights from `uniform(-scale, scale)`, zero biases.
    pub fn random_scaled<R: Rng + ?Sized>(name: &str, n_proj: usize, scale: f64, rng: &mut R) -> Self {
        Self::new(name, uniform_tensor(1, n_proj, scale, rng), Tensor::zeros(1, n_proj)).expect("shapes")
    }

    pub fn n_proj(&self) -> usize {
        self.w.len()
    }

    pub fn bind(&self, tape: &mut Tape<T>, mode: Mode, vars: &mut Vec<Var>) -> BoundProjection {
        let w = self.w.bind(tape, mode.trainable());
        let b = self.b.bind(tape, mode.trainable());
        vars.extend([w, b]);
        BoundProjection { w, b }
    }

    /// Single-signal projection before activation; returns `N_b×N_w`.
    pub fn project_affine(&self, x: &[T]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Mode::Frozen, &mut Vec::new());
        let xv = tape.constant(&Tensor::row(x.to_vec()));
        let out = bound.affine(&mut tape, xv)?;
        Tensor::from_vec(x.len(), self.n_proj(), tape.value(out).to_vec())
    }

    /// Single-signal projection with activation.
    pub fn project(&self, x: &[T]) -> Result<Tensor<T>> {
        Ok(tanh_tensor(self.project_affine(x)?))
    }
}

impl<T: Real> DotProductLayer<T> {
    pub fn new(name: &str, w: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        check_pair("dot_product", &w, &b)?;
        Ok(Self {
            w: Parameter::new(format!("{name}.w"), w),
            b: Parameter::new(format!("{name}.b"), b),
        })
    }

    pub fn random<R: Rng + ?Sized>(name: &str, n_bits: usize, n_proj: usize, rng: &mut R) -> Self {
        Self::random_scaled(name, n_bits, n_proj, INIT_SCALE, rng)
    }

    pub fn random_scaled<R: Rng + ?Sized>(name: &str, n_bits: usize, n_proj: usize, scale: f64, rng: &mut R) -> Self {
        Self::new(name, uniform_tensor(n_bits, n_proj, scale, rng), Tensor::zeros(n_bits, n_proj)).expect("shapes")
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w.tensor().shape()
    }

    pub fn bind(&self, tape: &mut Tape<T>, mode: Mode, vars: &mut Vec<Var>) -> BoundDotProduct {
        let w = self.w.bind(tape, mode.trainable());
        let b = self.b.bind(tape, mode.trainable());
        vars.extend([w, b]);
        BoundDotProduct { w, b }
    }

    pub fn dot_product_affine(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_shape("dot_product", x, self.shape())?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Mode::Frozen, &mut Vec::new());
        let xv = tape.constant(&flatten(x));
        let out = bound.affine(&mut tape, xv)?;
        Tensor::from_vec(x.rows(), x.cols(), tape.value(out).to_vec())
    }

    pub fn dot_product(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(tanh_tensor(self.dot_product_affine(x)?))
    }
}

impl<T: Real> InverseProjectionLayer<T> {
    pub fn new(name: &str, w: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        check_pair("inverse_projection", &w, &b)?;
        Ok(Self {
            w: Parameter::new(format!("{name}.w"), w),
            b: Parameter::new(format!("{name}.b"), b),
        })
    }

    pub fn random<R: Rng + ?Sized>(name: &str, n_bits: usize, n_proj: usize, rng: &mut R) -> Self {
        Self::random_scaled(name, n_bits, n_proj, INIT_SCALE, rng)
    }

    pub fn random_scaled<R: Rng + ?Sized>(name: &str, n_bits: usize, n_proj: usize, scale: f64, rng: &mut R) -> Self {
        Self::new(name, uniform_tensor(n_bits, n_proj, scale, rng), Tensor::zeros(n_bits, n_proj)).expect("shapes")
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w.tensor().shape()
    }

    pub fn bind(&self, tape: &mut Tape<T>, mode: Mode, vars: &mut Vec<Var>) -> BoundInverseProjection {
        let w = self.w.bind(tape, mode.trainable());
        let b = self.b.bind(tape, mode.trainable());
        vars.extend([w, b]);
        BoundInverseProjection {
            w,
            b,
            n_proj: self.shape().1,
        }
    }

    pub fn inverse_project_affine(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        expect_shape("inverse_projection", x, self.shape())?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Mode::Frozen, &mut Vec::new());
        let xv = tape.constant(&flatten(x));
        let out = bound.affine(&mut tape, xv)?;
        Ok(tape.value(out).to_vec())
    }

    pub fn inverse_project(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.inverse_project_affine(x)?.into_iter().map(|v| v.tanh()).collect())
    }
}

macro_rules! param_access {
    ($($ty:ident),*) => {$(
        impl<T: Real> $ty<T> {
            pub fn weight(&self) -> &Parameter<T> {
                &self.w
            }

            pub fn bias(&self) -> &Parameter<T> {
                &self.b
            }

            pub fn params(&self) -> [&Parameter<T>; 2] {
                [&self.w, &self.b]
            }

            pub fn params_mut(&mut self) -> [&mut Parameter<T>; 2] {
                [&mut self.w, &mut self.b]
            }

            pub fn cast<U: Real>(&self) -> $ty<U> {
                $ty { w: self.w.cast(), b: self.b.cast() }
            }
        }
    )*};
}

param_access!(ProjectionLayer, DotProductLayer, InverseProjectionLayer);

/// Tape handles of a bound [`ProjectionLayer`].
#[derive(Clone, Copy, Debug)]
pub struct BoundProjection {
    w: Var,
    b: Var,
}

impl BoundProjection {
    /// `R×N_b` → `R×(N_b·N_w)`, pre-activation.
    pub fn affine<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        tape.project(x, self.w, self.b)
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let a = self.affine(tape, x)?;
        tape.tanh(a)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundDotProduct {
    w: Var,
    b: Var,
}

impl BoundDotProduct {
    pub fn affine<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let m = tape.mul_row(x, self.w)?;
        tape.add_row(m, self.b)
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let a = self.affine(tape, x)?;
        tape.tanh(a)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundInverseProjection {
    w: Var,
    b: Var,
    n_proj: usize,
}

impl BoundInverseProjection {
    /// `R×(N_b·N_w)` → `R×N_b`, pre-activation.
    pub fn affine<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let m = tape.mul_row(x, self.w)?;
        let s = tape.group_sum(m, self.n_proj)?;
        let bias = tape.group_sum(self.b, self.n_proj)?;
        tape.add_row(s, bias)
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let a = self.affine(tape, x)?;
        tape.tanh(a)
    }
}

/// Merges the message and key branches: `tanh(X_d ⊙ K_d)`.
pub fn transform_on_tape<T: Real>(tape: &mut Tape<T>, xd: Var, kd: Var) -> Result<Var> {
    let p = tape.mul(xd, kd)?;
    tape.tanh(p)
}

/// Single-pair transform before activation.
pub fn transform_affine<T: Real>(xd: &Tensor<T>, kd: &Tensor<T>) -> Result<Tensor<T>> {
    if xd.shape() != kd.shape() {
        return Err(AncError::Shape {
            op: "transform",
            left: xd.shape(),
            right: kd.shape(),
        });
    }
    let mut tape = Tape::new();
    let (a, b) = (tape.constant(xd), tape.constant(kd));
    let p = tape.mul(a, b)?;
    Ok(tape.tensor(p))
}

pub fn transform<T: Real>(xd: &Tensor<T>, kd: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(tanh_tensor(transform_affine(xd, kd)?))
}

fn flatten<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::row(x.values().to_vec())
}

fn tanh_tensor<T: Real>(mut t: Tensor<T>) -> Tensor<T> {
    t.values_mut().iter_mut().for_each(|v| *v = v.tanh());
    t
}

fn expect_shape<T: Real>(op: &'static str, x: &Tensor<T>, shape: (usize, usize)) -> Result<()> {
    if x.shape() != shape {
        return Err(AncError::Shape {
            op,
            left: x.shape(),
            right: shape,
        });
    }
    Ok(())
}

/// `(y + 1) / 2` rounded to the nearest bit; `y = 0` rounds up to 1.
#[inline]
pub fn signal_bit<T: Real>(y: T) -> bool {
    y >= T::zero()
}

/// Nearest of `±1`, ties at zero resolving to `+1`.
#[inline]
pub fn round_signal<T: Real>(y: T) -> T {
    if signal_bit(y) {
        T::one()
    } else {
        -T::one()
    }
}

pub fn signal_to_bits<T: Real>(y: &[T]) -> Result<BitVector> {
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(AncError::Numeric(format!("signal entry {i}")));
    }
    Ok(BitVector::new(y.iter().map(|&v| signal_bit(v)).collect()))
}

/// Maps bit 0 to −1 and bit 1 to +1.
pub fn bits_to_signal<T: Real>(b: &BitVector) -> Vec<T> {
    b.bits().iter().map(|&bit| if bit { T::one() } else { -T::one() }).collect()
}
