//! Encrypt/decrypt throughput, `τ = N_p / (t_A + t_B)`.
//!
//! Only the two batched forward passes are timed. Conversion of bytes to
//! signals, rounding and packing happen outside the timed regions.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{AncError, Result};
use crate::keygen::Key;
use crate::networks::AncModel;
use crate::stream::StreamCipher;

/// Message sizes timed by default, in bytes.
pub const DEFAULT_SIZES: [usize; 6] = [16, 64, 128, 256, 512, 1024];
pub const WARMUP_REPETITIONS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub message_bytes: usize,
    /// Median encryption time.
    pub t_alice: Duration,
    /// Median decryption time.
    pub t_bob: Duration,
    /// Bytes per second from the two medians.
    pub throughput: f64,
    pub repetitions: usize,
    /// `(max − min) / median` of the per-repetition total time.
    pub dispersion: f64,
    /// 95% confidence interval for the throughput at the median total time.
    pub throughput_ci: (f64, f64),
}

impl BenchResult {
    fn new(message_bytes: usize, alice: &mut [Duration], bob: &mut [Duration]) -> Self {
        let mut total: Vec<Duration> = alice.iter().zip(bob.iter()).map(|(a, b)| *a + *b).collect();
        let (t_alice, t_bob) = (median(alice), median(bob));
        let mid = median(&mut total).as_secs_f64();
        let (lo, hi) = (total[0].as_secs_f64(), total[total.len() - 1].as_secs_f64());
        let (j, k) = median_ci_ranks(total.len());
        let bytes = message_bytes as f64;
        Self {
            message_bytes,
            t_alice,
            t_bob,
            throughput: message_bytes as f64 / (t_alice + t_bob).as_secs_f64(),
            repetitions: alice.len(),
            dispersion: if mid > 0.0 { (hi - lo) / mid } else { 0.0 },
            throughput_ci: (bytes / total[k].as_secs_f64(), bytes / total[j].as_secs_f64()),
        }
    }
}

/// Sorts in place and returns the middle element.
fn median(v: &mut [Duration]) -> Duration {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

/// Zero-based order-statistic ranks `(j, n-1-j)` bracketing the median of
/// `n` samples with at least 95% coverage, from the exact Binomial(n, 1/2)
/// tail. Falls back to the extremes when `n` is too small for 95%.
pub fn median_ci_ranks(n: usize) -> (usize, usize) {
    assert!(n > 0);
    let ln_half = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_choose = 0.0;
    let mut tail = 0.0;
    let mut j = 0;
    // P(B <= i) <= 2.5% means zero-based ranks i and n-1-i still bracket
    // the median with 95% coverage.
    for i in 0..n / 2 {
        tail += (ln_choose + ln_half).exp();
        if tail > 0.025 {
            break;
        }
        j = i;
        ln_choose += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    (j, n - 1 - j)
}

/// Times encryption and decryption of random messages of each size.
pub fn bench_throughput(model: &AncModel, key: &Key, sizes: &[usize], repetitions: usize, seed: u64) -> Result<Vec<BenchResult>> {
    if sizes.is_empty() {
        return Err(AncError::Argument("no message sizes given".into()));
    }
    if repetitions < 3 {
        return Err(AncError::Argument(format!("need at least 3 repetitions, got {repetitions}")));
    }
    let cipher = StreamCipher::new(model, key)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<(Tensor<f32>, Tensor<f32>)> = sizes
        .iter()
        .map(|&size| {
            let plaintext: Vec<u8> = (0..size).map(|_| rng.gen()).collect();
            (StreamCipher::plaintext_signals(&plaintext), cipher.key_signals(size))
        })
        .collect();
    let mut alice = vec![Vec::with_capacity(repetitions); sizes.len()];
    let mut bob = vec![Vec::with_capacity(repetitions); sizes.len()];
    // Sizes are interleaved within each repetition so that slow drift in
    // machine speed affects every size alike.
    for rep in 0..WARMUP_REPETITIONS + repetitions {
        for (i, (x, k)) in inputs.iter().enumerate() {
            let start = Instant::now();
            let y = cipher.encrypt_signals(x, k)?;
            let t_a = start.elapsed();
            let start = Instant::now();
            let out = cipher.decrypt_signals(&y, k)?;
            let t_b = start.elapsed();
            std::hint::black_box(out);
            if rep >= WARMUP_REPETITIONS {
                alice[i].push(t_a);
                bob[i].push(t_b);
            }
        }
    }
    Ok(sizes
        .iter()
        .zip(alice.iter_mut().zip(bob.iter_mut()))
        .map(|(&size, (a, b))| BenchResult::new(size, a, b))
        .collect())
}

/// `size_bytes,t_alice_s,t_bob_s,throughput_Bps,tau_ci_low,tau_ci_high,reps,spread`.
pub fn bench_csv(results: &[BenchResult]) -> String {
    let mut s = String::from("size_bytes,t_alice_s,t_bob_s,throughput_Bps,tau_ci_low,tau_ci_high,reps,spread\n");
    for r in results {
        let _ = writeln!(
            s,
            "{},{:.9},{:.9},{:.3},{:.3},{:.3},{},{:.4}",
            r.message_bytes,
            r.t_alice.as_secs_f64(),
            r.t_bob.as_secs_f64(),
            r.throughput,
            r.throughput_ci.0,
            r.throughput_ci.1,
            r.repetitions,
            r.dispersion
        );
    }
    s
}
