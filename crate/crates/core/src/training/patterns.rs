//! Minibatches summarized by sign pattern.
//!
//! Every layer acts on each bit position on its own, so output `i` of any of
//! the three networks depends only on `(x[i], k[i])`, or on `y[i]` and `k[i]`
//! for Bob and Eve, which are themselves functions of `(x[i], k[i])`. A batch
//! of pairs is therefore fully described by how often each of the four sign
//! combinations occurs at each position. The forward pass runs on four
//! pattern rows and every loss term is weighted by those counts, which gives
//! the same loss and gradient as the full batch at a fraction of the cost.

use crate::autodiff::Tensor;
use crate::error::{AncError, Result};
use crate::layers::signal_bit;

/// Pattern rows in order `(x, k)` = `(−,−)`, `(−,+)`, `(+,−)`, `(+,+)`.
pub const PATTERNS: usize = 4;

fn pattern_index(x: f32, k: f32) -> usize {
    2 * (x > 0.0) as usize + (k > 0.0) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternBatch {
    pairs: usize,
    n_bits: usize,
    /// `counts[c * n_bits + i]`: pairs with pattern `c` at position `i`.
    counts: Vec<u32>,
    x: Tensor<f32>,
    k: Tensor<f32>,
    weights: Tensor<f32>,
}

impl PatternBatch {
    /// Summarizes the pairs `(x[r], k[r])` for every `r` in `rows`.
    pub fn from_rows(x: &Tensor<f32>, k: &Tensor<f32>, rows: impl IntoIterator<Item = usize>) -> Result<Self> {
        if x.shape() != k.shape() {
            return Err(AncError::Shape {
                op: "pattern batch",
                left: x.shape(),
                right: k.shape(),
            });
        }
        let n_bits = x.cols();
        let mut counts = vec![0u32; PATTERNS * n_bits];
        let mut pairs = 0;
        for r in rows {
            for (i, (&xv, &kv)) in x.row_slice(r).iter().zip(k.row_slice(r)).enumerate() {
                counts[pattern_index(xv, kv) * n_bits + i] += 1;
            }
            pairs += 1;
        }
        if pairs == 0 || n_bits == 0 {
            return Err(AncError::Argument("pattern batch needs at least one pair".into()));
        }
        Ok(Self::from_counts(pairs, n_bits, counts))
    }

    /// Summarizes every row of `x` and `k`.
    pub fn from_signals(x: &Tensor<f32>, k: &Tensor<f32>) -> Result<Self> {
        Self::from_rows(x, k, 0..x.rows())
    }

    fn from_counts(pairs: usize, n_bits: usize, counts: Vec<u32>) -> Self {
        let sign = |positive: bool| if positive { 1.0 } else { -1.0 };
        let x = Tensor::from_fn(PATTERNS, n_bits, |c, _| sign(c >= 2));
        let k = Tensor::from_fn(PATTERNS, n_bits, |c, _| sign(c % 2 == 1));
        let total = (pairs * n_bits) as f64;
        let weights = Tensor::from_vec(
            PATTERNS,
            n_bits,
            counts.iter().map(|&n| (n as f64 / total) as f32).collect(),
        )
        .expect("pattern shape");
        Self {
            pairs,
            n_bits,
            counts,
            x,
            k,
            weights,
        }
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// `4×N_b` message signals of the pattern rows.
    pub fn x(&self) -> &Tensor<f32> {
        &self.x
    }

    /// `4×N_b` key signals of the pattern rows.
    pub fn k(&self) -> &Tensor<f32> {
        &self.k
    }

    /// Share of the batch's `pairs·N_b` bits in each pattern cell.
    pub fn weights(&self) -> &Tensor<f32> {
        &self.weights
    }

    /// Fraction of the batch's bits where the sign of `estimate` (a value
    /// per pattern cell) matches `target` (`x` or `k` of the pattern rows).
    pub fn agreement(&self, estimate: &Tensor<f32>, target: &Tensor<f32>) -> f64 {
        let hits: u64 = estimate
            .values()
            .iter()
            .zip(target.values())
            .zip(&self.counts)
            .filter(|((&e, &t), _)| signal_bit(e) == signal_bit(t))
            .map(|(_, &n)| n as u64)
            .sum();
        hits as f64 / (self.pairs * self.n_bits) as f64
    }

    /// True when every cell that occurs in the batch is recovered.
    pub fn all_recovered(&self, estimate: &Tensor<f32>, target: &Tensor<f32>) -> bool {
        estimate
            .values()
            .iter()
            .zip(target.values())
            .zip(&self.counts)
            .all(|((&e, &t), &n)| n == 0 || signal_bit(e) == signal_bit(t))
    }

    /// Expands per-cell values back to one row per pair of `x`/`k`.
    pub fn expand(values: &Tensor<f32>, x: &Tensor<f32>, k: &Tensor<f32>) -> Tensor<f32> {
        let n_bits = x.cols();
        Tensor::from_fn(x.rows(), n_bits, |r, i| {
            values.get(pattern_index(x.get(r, i), k.get(r, i)), i)
        })
    }
}
