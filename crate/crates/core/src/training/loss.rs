//! Loss terms. Every term is a root-mean-square error over an `N_p×N_s`
//! batch, so each lies in `[0, 2]` for signals in `[-1, 1]`.
//!
//! Each loss optionally takes per-entry weights summing to one, in which
//! case the mean inside every root becomes the weighted mean. Pattern
//! batches use this to stand in for the pairs they summarize.

use crate::autodiff::{Real, Tape, Var};
use crate::error::{AncError, Result};
use crate::layers::round_signal;
use crate::networks::{AliceOutput, BobOutput};

/// Batch geometry of a loss: `predictors` rows of `samples` values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossBatch {
    pub predictors: usize,
    pub samples: usize,
}

impl LossBatch {
    pub fn new(predictors: usize, samples: usize) -> Result<Self> {
        if predictors == 0 || samples == 0 {
            return Err(AncError::Argument(format!(
                "loss batch needs at least one row and column, got {predictors}x{samples}"
            )));
        }
        Ok(Self { predictors, samples })
    }
}

/// `sqrt(mean((a − b)²))`.
pub fn rmse<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    let (rows, cols) = tape.shape(a);
    LossBatch::new(rows, cols)?;
    let d = tape.sub(a, b)?;
    let sq = tape.square(d)?;
    let m = tape.mean(sq)?;
    tape.sqrt(m)
}

/// `sqrt(Σ w ⊙ (a − b)²)`.
pub fn weighted_rmse<T: Real>(tape: &mut Tape<T>, a: Var, b: Var, w: Var) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let sq = tape.square(d)?;
    let m = tape.mul(sq, w)?;
    let s = tape.sum(m)?;
    tape.sqrt(s)
}

fn term<T: Real>(tape: &mut Tape<T>, a: Var, b: Var, weights: Option<Var>) -> Result<Var> {
    match weights {
        Some(w) => weighted_rmse(tape, a, b, w),
        None => rmse(tape, a, b),
    }
}

/// Alice's composite loss and its components.
#[derive(Clone, Copy, Debug)]
pub struct AliceLoss {
    pub total: Var,
    pub message: Var,
    pub key: Var,
    /// Distance from `y` to its rounded copy.
    pub rounding: Var,
    pub bob: Var,
    /// Eve's raw reconstruction error; enters the total as `2 − eve`.
    pub eve: Var,
    /// The gradient-blocked ±1 target used by `rounding`.
    pub rounded_y: Var,
}

/// `[λ(x,x̂_A) + λ(k,k̂_A) + λ(y,⌊y⌉)] + λ(x,x̂_B) + [2 − λ(x,x̂_E)]`.
///
/// `⌊y⌉` is recorded as a constant, so no gradient passes through it.
pub fn alice_loss<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    k: Var,
    alice: &AliceOutput<Var>,
    bob_x_hat: Var,
    eve_x_hat: Var,
    weights: Option<Var>,
) -> Result<AliceLoss> {
    let message = term(tape, x, alice.x_hat, weights)?;
    let key = term(tape, k, alice.k_hat, weights)?;
    let rounded_y = tape.detach_map(alice.y, round_signal)?;
    let rounding = term(tape, alice.y, rounded_y, weights)?;
    let bob = term(tape, x, bob_x_hat, weights)?;
    let eve = term(tape, x, eve_x_hat, weights)?;
    let eve_term = tape.scale(eve, -T::one())?;
    let eve_term = tape.add_scalar(eve_term, T::from_f64(2.0))?;
    let mut total = tape.add(message, key)?;
    total = tape.add(total, rounding)?;
    total = tape.add(total, bob)?;
    total = tape.add(total, eve_term)?;
    Ok(AliceLoss {
        total,
        message,
        key,
        rounding,
        bob,
        eve,
        rounded_y,
    })
}

/// `λ(x,x̂_B) + λ(k,k̂_B)`.
pub fn bob_loss<T: Real>(tape: &mut Tape<T>, x: Var, k: Var, bob: &BobOutput<Var>, weights: Option<Var>) -> Result<Var> {
    let a = term(tape, x, bob.x_hat, weights)?;
    let b = term(tape, k, bob.k_hat, weights)?;
    tape.add(a, b)
}

/// `λ(x,x̂_E)`.
pub fn eve_loss<T: Real>(tape: &mut Tape<T>, x: Var, eve_x_hat: Var, weights: Option<Var>) -> Result<Var> {
    term(tape, x, eve_x_hat, weights)
}
