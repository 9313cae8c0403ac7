//! Adversarial training of Alice, Bob and Eve.
//!
//! One epoch is one pass over every message paired with every pool key, in
//! minibatches of `minibatch_messages` pairs reshuffled each epoch. Each
//! minibatch performs one optimizer step per network in `update_order`:
//!
//! * Alice minimizes the composite loss with Bob and Eve frozen; its
//!   gradient flows through both of them.
//! * Bob minimizes its loss on Alice's unrounded ciphertext, Alice frozen.
//! * Eve minimizes its loss on the same unrounded ciphertext.
//!
//! Steps run on [`PatternBatch`] summaries of the minibatch, which give the
//! exact minibatch loss and gradient.
//!
//! After every epoch Bob is scored on the full cross product with rounded
//! ciphertexts; 100% stops training early. A converged model whose
//! ciphertext equals the plaintext for any pair is rejected.

mod loss;
mod patterns;
mod sweep;

pub use loss::{alice_loss, bob_loss, eve_loss, rmse, weighted_rmse, AliceLoss, LossBatch};
pub use patterns::{PatternBatch, PATTERNS};
pub use sweep::{
    total_wall_time,
    run_realizations, sweep_projection_dims, thread_pool, wilson_interval, OrderingVerdict, RealizationResult,
    SweepReport, SweepRow,
};

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, Tape, Tensor};
use crate::error::{AncError, Result};
use crate::evaluation::{passthrough_on, recovery_on, CrossProduct};
use crate::keygen::KeyPool;
use crate::layers::{round_signal, Mode, INIT_SCALE};
use crate::networks::{AncModel, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
    Eve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub n_bits: usize,
    pub n_proj: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: u32,
    /// Message/key pairs per minibatch.
    pub minibatch_messages: usize,
    pub seed: u64,
    pub update_order: Vec<Role>,
    pub key_psl_tolerance: u32,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            n_bits: 8,
            n_proj: 8,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            max_epochs: 256,
            minibatch_messages: 256,
            seed: 0,
            update_order: vec![Role::Alice, Role::Bob, Role::Eve],
            key_psl_tolerance: 5,
            init_scale: INIT_SCALE,
        }
    }
}

impl TrainingConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(AncError::Argument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_epochs == 0 {
            return Err(AncError::Argument("max_epochs must be at least 1".into()));
        }
        if self.minibatch_messages == 0 {
            return Err(AncError::Argument("minibatch must hold at least one pair".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(AncError::Argument(format!("init scale must be finite and non-negative, got {}", self.init_scale)));
        }
        if self.n_bits == 0 || self.n_proj == 0 {
            return Err(AncError::Argument("bit count and projection width must be positive".into()));
        }
        let mut order = self.update_order.clone();
        order.sort_by_key(|r| *r as u8);
        if order != [Role::Alice, Role::Bob, Role::Eve] {
            return Err(AncError::Argument(format!(
                "update order must name alice, bob and eve exactly once, got {:?}",
                self.update_order
            )));
        }
        Ok(())
    }
}

/// Mixes a base seed with an attempt index into an independent seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Losses and minibatch accuracies of one iteration. Accuracies are
/// measured on the minibatch with unrounded ciphertext.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss_alice: f32,
    pub loss_bob: f32,
    pub loss_eve: f32,
    pub acc_bob: f64,
    pub acc_eve: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    EpochCapReached,
    IdentityPassthroughRejected,
    /// A loss went non-finite.
    Diverged,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::EpochCapReached => "epoch_cap_reached",
            Outcome::IdentityPassthroughRejected => "identity_passthrough_rejected",
            Outcome::Diverged => "diverged",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    pub records: Vec<IterationRecord>,
    pub outcome: Outcome,
    pub epochs_used: u32,
    pub wall_time: Duration,
    /// Full cross-product accuracies after the last epoch, rounded ciphertext.
    pub final_bob_accuracy: f64,
    pub final_eve_accuracy: f64,
}

impl TrainingReport {
    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }

    /// `iteration,loss_alice,loss_bob,loss_eve,acc_bob,acc_eve`, LF endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,loss_alice,loss_bob,loss_eve,acc_bob,acc_eve\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.iteration, r.loss_alice, r.loss_bob, r.loss_eve, r.acc_bob, r.acc_eve
            );
        }
        s
    }
}

fn finite(v: f32, what: &str) -> Result<f32> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AncError::Numeric(what.to_string()))
    }
}

/// Alice update with Bob and Eve frozen. Returns the loss before the step.
pub fn alice_step(model: &mut AncModel, batch: &PatternBatch, adam: &AdamConfig) -> Result<f32> {
    let eve_net = model.eve()?;
    let mut tape = Tape::new();
    let alice = model.alice.bind(&mut tape, Mode::Trainable);
    let bob = model.bob.bind(&mut tape, Mode::Frozen);
    let eve = eve_net.bind(&mut tape, Mode::Frozen);
    let (xv, kv) = (tape.constant(batch.x()), tape.constant(batch.k()));
    let wv = tape.constant(batch.weights());
    let a = alice.forward(&mut tape, xv, kv)?;
    let b = bob.forward(&mut tape, a.y, kv)?;
    let e = eve.forward(&mut tape, a.y)?;
    let l = alice_loss(&mut tape, xv, kv, &a, b.x_hat, e, Some(wv))?;
    let value = finite(tape.item(l.total), "alice loss")?;
    tape.backward(l.total)?;
    model.alice.absorb_grads(&tape, alice.vars());
    model.alice.adam_step(adam)?;
    Ok(value)
}

/// Bob update on Alice's ciphertext `y` for the pattern rows of `batch`.
/// Returns (loss, minibatch accuracy).
pub fn bob_step(model: &mut AncModel, y: &Tensor<f32>, batch: &PatternBatch, adam: &AdamConfig) -> Result<(f32, f64)> {
    let mut tape = Tape::new();
    let bob = model.bob.bind(&mut tape, Mode::Trainable);
    let (yv, xv, kv) = (tape.constant(y), tape.constant(batch.x()), tape.constant(batch.k()));
    let wv = tape.constant(batch.weights());
    let b = bob.forward(&mut tape, yv, kv)?;
    let l = bob_loss(&mut tape, xv, kv, &b, Some(wv))?;
    let value = finite(tape.item(l), "bob loss")?;
    let acc = batch.agreement(&tape.tensor(b.x_hat), batch.x());
    tape.backward(l)?;
    model.bob.absorb_grads(&tape, bob.vars());
    model.bob.adam_step(adam)?;
    Ok((value, acc))
}

/// Eve update on the same ciphertext. Returns (loss, minibatch accuracy).
pub fn eve_step(model: &mut AncModel, y: &Tensor<f32>, batch: &PatternBatch, adam: &AdamConfig) -> Result<(f32, f64)> {
    let eve_net = model
        .eve
        .as_mut()
        .ok_or_else(|| AncError::Usage("training needs an adversary network".into()))?;
    let mut tape = Tape::new();
    let eve = eve_net.bind(&mut tape, Mode::Trainable);
    let (yv, xv) = (tape.constant(y), tape.constant(batch.x()));
    let wv = tape.constant(batch.weights());
    let e = eve.forward(&mut tape, yv)?;
    let l = eve_loss(&mut tape, xv, e, Some(wv))?;
    let value = finite(tape.item(l), "eve loss")?;
    let acc = batch.agreement(&tape.tensor(e), batch.x());
    tape.backward(l)?;
    eve_net.absorb_grads(&tape, eve.vars());
    eve_net.adam_step(adam)?;
    Ok((value, acc))
}

fn is_divergence(e: &AncError) -> bool {
    matches!(e, AncError::Numeric(_))
}

/// Whether Bob decodes every cell of `full` from rounded ciphertext.
fn bob_recovers_all(model: &AncModel, full: &PatternBatch) -> Result<bool> {
    let mut y = model.alice.encrypt_batch(full.x(), full.k())?;
    y.values_mut().iter_mut().for_each(|v| *v = round_signal(*v));
    let x_hat = model.bob.decrypt_batch(&y, full.k())?;
    Ok(full.all_recovered(&x_hat, full.x()))
}

/// Trains one randomly initialised model from `cfg.seed`.
pub fn train_realization(cfg: &TrainingConfig, pool: &KeyPool) -> Result<(AncModel, TrainingReport)> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(AncError::Key("empty key pool".into()));
    }
    if pool.n_bits() != cfg.n_bits {
        return Err(AncError::Key(format!(
            "pool holds {}-bit keys, config expects {}",
            pool.n_bits(),
            cfg.n_bits
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = AncModel::random_scaled(cfg.n_bits, cfg.n_proj, pool.tolerance(), cfg.seed, cfg.init_scale, &mut rng);
    let adam = cfg.adam();
    let cp = CrossProduct::new(cfg.n_bits, pool)?;
    let full = PatternBatch::from_signals(&cp.messages, &cp.keys)?;
    let mut order: Vec<usize> = (0..cp.rows()).collect();

    let mut records = Vec::new();
    let mut outcome = Outcome::EpochCapReached;
    let mut epochs_used = 0;

    'epochs: for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(cfg.minibatch_messages) {
            let batch = PatternBatch::from_rows(&cp.messages, &cp.keys, rows.iter().copied())?;
            let mut rec = IterationRecord {
                iteration: records.len(),
                loss_alice: f32::NAN,
                loss_bob: f32::NAN,
                loss_eve: f32::NAN,
                acc_bob: f64::NAN,
                acc_eve: f64::NAN,
            };
            // Ciphertext of the pattern rows, recomputed after each Alice step.
            let mut y: Option<Tensor<f32>> = None;
            for role in &cfg.update_order {
                let step = match role {
                    Role::Alice => {
                        y = None;
                        alice_step(&mut model, &batch, &adam).map(|l| rec.loss_alice = l)
                    }
                    Role::Bob | Role::Eve => {
                        if y.is_none() {
                            y = Some(model.alice.encrypt_batch(batch.x(), batch.k())?);
                        }
                        let yt = y.as_ref().expect("cached");
                        if *role == Role::Bob {
                            bob_step(&mut model, yt, &batch, &adam).map(|(l, a)| {
                                rec.loss_bob = l;
                                rec.acc_bob = a;
                            })
                        } else {
                            eve_step(&mut model, yt, &batch, &adam).map(|(l, a)| {
                                rec.loss_eve = l;
                                rec.acc_eve = a;
                            })
                        }
                    }
                };
                match step {
                    Ok(()) => {}
                    Err(e) if is_divergence(&e) => {
                        records.push(rec);
                        outcome = Outcome::Diverged;
                        epochs_used = epoch + 1;
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
            }
            records.push(rec);
        }
        epochs_used = epoch + 1;
        // The pattern check is exact; the full evaluation below confirms it.
        if bob_recovers_all(&model, &full)? && recovery_on(&model, &cp)?.bob == 1.0 {
            outcome = Outcome::Converged;
            break;
        }
    }

    if outcome == Outcome::Converged && passthrough_on(&model, &cp)? {
        outcome = Outcome::IdentityPassthroughRejected;
    }
    let last = recovery_on(&model, &cp).unwrap_or(crate::evaluation::RecoveryAccuracy {
        bob: f64::NAN,
        eve: None,
    });
    model.converged = outcome == Outcome::Converged;
    model.training_epochs = epochs_used;
    let report = TrainingReport {
        records,
        outcome,
        epochs_used,
        wall_time: start.elapsed(),
        final_bob_accuracy: last.bob,
        final_eve_accuracy: last.eve.unwrap_or(f64::NAN),
    };
    Ok((model, report))
}

/// Reinitialises and retrains with fresh seeds until a realization converges
/// or `max_realizations` have been tried. Returns the converged model, if
/// any, and every report in order.
pub fn train_until_converged(
    cfg: &TrainingConfig,
    pool: &KeyPool,
    max_realizations: usize,
) -> Result<(Option<AncModel>, Vec<TrainingReport>)> {
    let mut reports = Vec::new();
    for i in 0..max_realizations {
        let c = TrainingConfig {
            seed: derive_seed(cfg.seed, i as u64),
            ..cfg.clone()
        };
        let (model, report) = train_realization(&c, pool)?;
        let done = report.converged();
        reports.push(report);
        if done {
            return Ok((Some(model), reports));
        }
    }
    Ok((None, reports))
}
