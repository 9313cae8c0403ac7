//! Shared oracles for the integration tests and the acceptance run.
#![allow(dead_code)]

use anc_core::autodiff::{Tape, Tensor, Var};
use anc_core::layers::Mode;
use anc_core::networks::{AliceNet, BobNet, EveNet, Network};
use anc_core::training::{alice_loss, bob_loss, eve_loss, PatternBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N_BITS: usize = 4;
pub const N_PROJ: usize = 4;
pub const EPS: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;

pub fn close(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    (analytic - numeric).abs() <= (REL_TOL * scale).max(ABS_FLOOR)
}

pub fn signals(rng: &mut ChaCha8Rng, rows: usize) -> Tensor<f64> {
    Tensor::from_fn(rows, N_BITS, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 })
}

pub fn dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

#[derive(Clone, Copy, Debug)]
enum Loss {
    Alice,
    Bob,
    Eve,
}

#[derive(Clone)]
struct Trio {
    alice: AliceNet<f64>,
    bob: BobNet<f64>,
    eve: EveNet<f64>,
}

impl Trio {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            alice: AliceNet::random(N_BITS, N_PROJ, rng),
            bob: BobNet::random(N_BITS, N_PROJ, rng),
            eve: EveNet::random(N_BITS, N_PROJ, rng),
        }
    }

    fn coords(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (p, len) in self.param_lens().into_iter().enumerate() {
            out.extend((0..len).map(|j| (p, j)));
        }
        out
    }

    fn param_lens(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.alice.params().iter().map(|p| p.len()).collect();
        v.extend(self.bob.params().iter().map(|p| p.len()));
        v.extend(self.eve.params().iter().map(|p| p.len()));
        v
    }

    fn nudge(&mut self, (p, j): (usize, usize), delta: f64) {
        let mut all = self.alice.params_mut();
        all.extend(self.bob.params_mut());
        all.extend(self.eve.params_mut());
        all[p].tensor_mut().values_mut()[j] += delta;
    }

    /// Loss value and, per parameter tensor, its gradient.
    fn evaluate(&self, which: Loss, x: &Tensor<f64>, k: &Tensor<f64>, w: Option<&Tensor<f64>>) -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::<f64>::new();
        let a = self.alice.bind(&mut tape, Mode::Trainable);
        let b = self.bob.bind(&mut tape, Mode::Trainable);
        let e = self.eve.bind(&mut tape, Mode::Trainable);
        let (xv, kv) = (tape.constant(x), tape.constant(k));
        let wv = w.map(|w| tape.constant(w));
        let out = a.forward(&mut tape, xv, kv).unwrap();
        let bob = b.forward(&mut tape, out.y, kv).unwrap();
        let eve = e.forward(&mut tape, out.y).unwrap();
        let loss = match which {
            Loss::Alice => alice_loss(&mut tape, xv, kv, &out, bob.x_hat, eve, wv).unwrap().total,
            Loss::Bob => bob_loss(&mut tape, xv, kv, &bob, wv).unwrap(),
            Loss::Eve => eve_loss(&mut tape, xv, eve, wv).unwrap(),
        };
        let value = tape.item(loss);
        tape.backward(loss).unwrap();
        let vars: Vec<Var> = a.vars().iter().chain(b.vars()).chain(e.vars()).copied().collect();
        let grads = vars
            .iter()
            .zip(self.param_lens())
            .map(|(&v, len)| tape.grad(v).map_or(vec![0.0; len], <[f64]>::to_vec))
            .collect();
        (value, grads)
    }
}

/// Compares analytic and central-difference gradients of all three losses
/// at random coordinates. Returns the number of coordinates checked.
pub fn check_trio(trials: usize, coords_per_trial: usize, seed: u64, weighted: bool) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for trial in 0..trials {
        let trio = Trio::random(&mut rng);
        let (x, k, w) = if weighted {
            let (xs, ks) = (signals(&mut rng, 9).cast::<f32>(), signals(&mut rng, 9).cast::<f32>());
            let b = PatternBatch::from_signals(&xs, &ks).unwrap();
            let total = (b.pairs() * b.n_bits()) as f64;
            let w = Tensor::from_vec(4, N_BITS, b.counts().iter().map(|&n| n as f64 / total).collect()).unwrap();
            (b.x().cast::<f64>(), b.k().cast::<f64>(), Some(w))
        } else {
            (signals(&mut rng, 3), signals(&mut rng, 3), None)
        };
        let coords = trio.coords();
        for which in [Loss::Alice, Loss::Bob, Loss::Eve] {
            let (_, grads) = trio.evaluate(which, &x, &k, w.as_ref());
            for _ in 0..coords_per_trial {
                let c = coords[rng.gen_range(0..coords.len())];
                let mut plus = trio.clone();
                plus.nudge(c, EPS);
                let mut minus = trio.clone();
                minus.nudge(c, -EPS);
                let fp = plus.evaluate(which, &x, &k, w.as_ref()).0;
                let fm = minus.evaluate(which, &x, &k, w.as_ref()).0;
                let numeric = (fp - fm) / (2.0 * EPS);
                let analytic = grads[c.0][c.1];
                assert!(
                    close(analytic, numeric),
                    "trial {trial} {which:?} param {c:?}: analytic {analytic} numeric {numeric}"
                );
                checked += 1;
            }
        }
    }
    checked
}

/// Peak sidelobe by direct enumeration of every circular shift.
pub fn brute_psl(value: u64, n_bits: usize) -> u32 {
    let bit = |i: usize| (value >> (n_bits - 1 - i)) & 1;
    (1..n_bits)
        .map(|shift| (0..n_bits).map(|i| (bit(i) * bit((i + shift) % n_bits)) as u32).sum())
        .max()
        .unwrap_or(0)
}

/// Every balanced `n_bits` value with peak sidelobe at most `tolerance`.
pub fn brute_pool(n_bits: usize, tolerance: u32) -> Vec<u64> {
    (0..1u64 << n_bits)
        .filter(|v| v.count_ones() as usize * 2 == n_bits && brute_psl(*v, n_bits) <= tolerance)
        .collect()
}

/// Similarity percent of a ciphertext table, counting entry by entry against
/// each column's majority bit (1 on ties).
pub fn brute_similarity(table: &[Vec<bool>]) -> f64 {
    let (n_keys, n_bits) = (table.len(), table[0].len());
    let mut hits = 0usize;
    for i in 0..n_bits {
        let ones = table.iter().filter(|r| r[i]).count();
        let mode = 2 * ones >= n_keys;
        for row in table {
            if row[i] == mode {
                hits += 1;
            }
        }
    }
    100.0 * hits as f64 / (n_bits * n_keys) as f64
}
