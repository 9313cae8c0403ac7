//! Pattern-batch training steps against the full minibatch they summarize.

use anc_core::autodiff::{Tape, Tensor, Var};
use anc_core::layers::Mode;
use anc_core::networks::{AliceNet, BobNet, EveNet};
use anc_core::training::{alice_loss, bob_loss, eve_loss, PatternBatch};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn signals(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f32> {
    Tensor::from_fn(rows, cols, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 })
}

struct Outcome {
    losses: [f64; 3],
    grads: Vec<Vec<f64>>,
}

/// All three losses and the Alice-loss gradient of every parameter, with
/// either the full batch (`w = None`) or its pattern summary.
fn run(
    nets: &(AliceNet<f64>, BobNet<f64>, EveNet<f64>),
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    w: Option<&Tensor<f64>>,
) -> Outcome {
    let mut tape = Tape::<f64>::new();
    let a = nets.0.bind(&mut tape, Mode::Trainable);
    let b = nets.1.bind(&mut tape, Mode::Trainable);
    let e = nets.2.bind(&mut tape, Mode::Trainable);
    let (xv, kv) = (tape.constant(x), tape.constant(k));
    let wv = w.map(|w| tape.constant(w));
    let out = a.forward(&mut tape, xv, kv).unwrap();
    let bob = b.forward(&mut tape, out.y, kv).unwrap();
    let eve = e.forward(&mut tape, out.y).unwrap();
    let la = alice_loss(&mut tape, xv, kv, &out, bob.x_hat, eve, wv).unwrap().total;
    let lb = bob_loss(&mut tape, xv, kv, &bob, wv).unwrap();
    let le = eve_loss(&mut tape, xv, eve, wv).unwrap();
    let losses = [tape.item(la), tape.item(lb), tape.item(le)];
    tape.backward(la).unwrap();
    let vars: Vec<Var> = a.vars().iter().chain(b.vars()).chain(e.vars()).copied().collect();
    let grads = vars.iter().map(|&v| tape.grad(v).map_or(Vec::new(), <[f64]>::to_vec)).collect();
    Outcome { losses, grads }
}

fn compare(seed: u64, rows: usize, n_bits: usize, n_proj: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nets = (
        AliceNet::<f64>::random(n_bits, n_proj, &mut rng),
        BobNet::<f64>::random(n_bits, n_proj, &mut rng),
        EveNet::<f64>::random(n_bits, n_proj, &mut rng),
    );
    let (x, k) = (signals(&mut rng, rows, n_bits), signals(&mut rng, rows, n_bits));
    let batch = PatternBatch::from_signals(&x, &k).unwrap();
    let total = (rows * n_bits) as f64;
    let w = Tensor::from_vec(4, n_bits, batch.counts().iter().map(|&n| n as f64 / total).collect()).unwrap();

    let full = run(&nets, &x.cast(), &k.cast(), None);
    let summary = run(&nets, &batch.x().cast(), &batch.k().cast(), Some(&w));
    for (f, s) in full.losses.iter().zip(&summary.losses) {
        assert!((f - s).abs() < 1e-12, "loss {f} vs {s}");
    }
    for (gf, gs) in full.grads.iter().zip(&summary.grads) {
        assert_eq!(gf.len(), gs.len());
        for (a, b) in gf.iter().zip(gs) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "gradient {a} vs {b}");
        }
    }
}

#[test]
fn summary_matches_full_batch_at_width_8() {
    compare(1, 256, 8, 8);
}

#[test]
fn expanded_pattern_outputs_match_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let alice = AliceNet::<f32>::random(8, 8, &mut rng);
    let (x, k) = (signals(&mut rng, 50, 8), signals(&mut rng, 50, 8));
    let batch = PatternBatch::from_signals(&x, &k).unwrap();
    let per_row = alice.encrypt_batch(&x, &k).unwrap();
    let per_pattern = alice.encrypt_batch(batch.x(), batch.k()).unwrap();
    assert_eq!(PatternBatch::expand(&per_pattern, &x, &k), per_row);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn summary_matches_full_batch(seed in any::<u64>(), rows in 1usize..40, n_bits in 1usize..6, n_proj in 1usize..6) {
        compare(seed, rows, n_bits, n_proj);
    }
}
