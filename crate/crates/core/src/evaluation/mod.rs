//! Post-training metrics over the full message × key cross product.
//!
//! Evaluation always rounds Alice's ciphertext to ±1 before Bob or Eve sees
//! it.

pub mod quantize;
mod uniqueness;

pub use quantize::{dequantize, quantize, QuantizationConfig};
pub use uniqueness::{score_table, UniquenessScore};

use std::fmt::Write as _;

use crate::autodiff::Tensor;
use crate::bits::BitVector;
use crate::error::{AncError, Result};
use crate::keygen::{Key, KeyPool};
use crate::layers::{bits_to_signal, round_signal, signal_bit};
use crate::networks::AncModel;

/// Rows per forward pass when sweeping large batches.
const CHUNK_ROWS: usize = 4096;

/// Every message paired with every key, message-major: row `m·N_k + j`
/// holds message `m` and key `j`.
#[derive(Clone, Debug)]
pub struct CrossProduct {
    pub messages: Tensor<f32>,
    pub keys: Tensor<f32>,
    pub n_messages: usize,
    pub n_keys: usize,
}

impl CrossProduct {
    pub fn new(n_bits: usize, pool: &KeyPool) -> Result<Self> {
        if pool.n_bits() != n_bits {
            return Err(AncError::Key(format!(
                "pool holds {}-bit keys, model expects {n_bits}",
                pool.n_bits()
            )));
        }
        if n_bits > 20 {
            return Err(AncError::Argument(format!("{n_bits}-bit messages are too many to enumerate")));
        }
        let messages: Vec<BitVector> = (0..1u64 << n_bits).map(|v| BitVector::from_value(v, n_bits)).collect();
        Ok(Self::from_parts(&messages, pool.keys()))
    }

    pub fn from_parts(messages: &[BitVector], keys: &[Key]) -> Self {
        let n_bits = messages.first().map_or(0, BitVector::len);
        let mut xs = Vec::with_capacity(messages.len() * keys.len() * n_bits);
        let mut ks = Vec::with_capacity(xs.capacity());
        let key_signals: Vec<Vec<f32>> = keys.iter().map(|k| bits_to_signal(k.bits())).collect();
        for m in messages {
            let x: Vec<f32> = bits_to_signal(m);
            for k in &key_signals {
                xs.extend_from_slice(&x);
                ks.extend_from_slice(k);
            }
        }
        let rows = messages.len() * keys.len();
        Self {
            messages: Tensor::from_vec(rows, n_bits, xs).expect("shape"),
            keys: Tensor::from_vec(rows, n_bits, ks).expect("shape"),
            n_messages: messages.len(),
            n_keys: keys.len(),
        }
    }

    pub fn rows(&self) -> usize {
        self.messages.rows()
    }
}

fn check_dims(model: &AncModel, pool: &KeyPool) -> Result<()> {
    if pool.is_empty() {
        return Err(AncError::Key("empty key pool".into()));
    }
    if pool.n_bits() != model.n_bits {
        return Err(AncError::Key(format!(
            "pool holds {}-bit keys, model expects {}",
            pool.n_bits(),
            model.n_bits
        )));
    }
    Ok(())
}

fn rounded(mut t: Tensor<f32>) -> Tensor<f32> {
    t.values_mut().iter_mut().for_each(|v| *v = round_signal(*v));
    t
}

/// Alice's ciphertext for every row, rounded to ±1.
pub fn rounded_ciphertexts(model: &AncModel, x: &Tensor<f32>, k: &Tensor<f32>) -> Result<Tensor<f32>> {
    let mut parts = Vec::new();
    for start in (0..x.rows()).step_by(CHUNK_ROWS) {
        let end = start + CHUNK_ROWS;
        let y = model.alice.encrypt_batch(&x.slice_rows(start, end), &k.slice_rows(start, end))?;
        parts.push(rounded(y));
    }
    if parts.is_empty() {
        return Ok(Tensor::zeros(0, x.cols()));
    }
    Tensor::vstack(&parts)
}

/// Bob's message estimate for every row of `y` (already rounded or not).
pub fn bob_estimates(model: &AncModel, y: &Tensor<f32>, k: &Tensor<f32>) -> Result<Tensor<f32>> {
    let mut parts = Vec::new();
    for start in (0..y.rows()).step_by(CHUNK_ROWS) {
        let end = start + CHUNK_ROWS;
        parts.push(model.bob.decrypt_batch(&y.slice_rows(start, end), &k.slice_rows(start, end))?);
    }
    if parts.is_empty() {
        return Ok(Tensor::zeros(0, y.cols()));
    }
    Tensor::vstack(&parts)
}

fn eve_estimates(model: &AncModel, y: &Tensor<f32>) -> Result<Tensor<f32>> {
    let eve = model.eve()?;
    let mut parts = Vec::new();
    for start in (0..y.rows()).step_by(CHUNK_ROWS) {
        parts.push(eve.forward_batch(&y.slice_rows(start, start + CHUNK_ROWS))?);
    }
    Tensor::vstack(&parts)
}

/// Fraction of entries where the estimate's rounded bit equals the target's.
pub fn bit_agreement(estimate: &Tensor<f32>, target: &Tensor<f32>) -> f64 {
    let n = estimate.len().min(target.len());
    if n == 0 {
        return 0.0;
    }
    let hits = estimate
        .values()
        .iter()
        .zip(target.values())
        .filter(|(&e, &t)| signal_bit(e) == signal_bit(t))
        .count();
    hits as f64 / n as f64
}

/// Bob's bit recovery and (when Eve is present) Eve's, over one cross product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveryAccuracy {
    pub bob: f64,
    pub eve: Option<f64>,
}

pub fn recovery_on(model: &AncModel, cp: &CrossProduct) -> Result<RecoveryAccuracy> {
    let y = rounded_ciphertexts(model, &cp.messages, &cp.keys)?;
    let bob = bit_agreement(&bob_estimates(model, &y, &cp.keys)?, &cp.messages);
    let eve = match model.eve {
        Some(_) => Some(bit_agreement(&eve_estimates(model, &y)?, &cp.messages)),
        None => None,
    };
    Ok(RecoveryAccuracy { bob, eve })
}

/// Fraction of message bits Bob recovers over every message and pool key.
pub fn bit_recovery_accuracy(model: &AncModel, pool: &KeyPool) -> Result<f64> {
    check_dims(model, pool)?;
    let cp = CrossProduct::new(model.n_bits, pool)?;
    let y = rounded_ciphertexts(model, &cp.messages, &cp.keys)?;
    Ok(bit_agreement(&bob_estimates(model, &y, &cp.keys)?, &cp.messages))
}

/// Same as [`bit_recovery_accuracy`] for the adversary, which sees only `y`.
pub fn eve_accuracy(model: &AncModel, pool: &KeyPool) -> Result<f64> {
    check_dims(model, pool)?;
    let cp = CrossProduct::new(model.n_bits, pool)?;
    let y = rounded_ciphertexts(model, &cp.messages, &cp.keys)?;
    Ok(bit_agreement(&eve_estimates(model, &y)?, &cp.messages))
}

/// True when some message encrypts to itself under some key.
pub fn is_passthrough(model: &AncModel, pool: &KeyPool) -> Result<bool> {
    check_dims(model, pool)?;
    let cp = CrossProduct::new(model.n_bits, pool)?;
    Ok(passthrough_on(model, &cp)?)
}

pub fn passthrough_on(model: &AncModel, cp: &CrossProduct) -> Result<bool> {
    let y = rounded_ciphertexts(model, &cp.messages, &cp.keys)?;
    let n = model.n_bits;
    Ok(y.values()
        .chunks_exact(n)
        .zip(cp.messages.values().chunks_exact(n))
        .any(|(a, b)| a == b))
}

fn row_bits(row: &[f32]) -> BitVector {
    BitVector::new(row.iter().map(|&v| signal_bit(v)).collect())
}

/// Rounded ciphertext bits for `x` under every pool key, in pool order.
pub fn ciphertext_table(model: &AncModel, pool: &KeyPool, x: &BitVector) -> Result<Vec<BitVector>> {
    check_dims(model, pool)?;
    let cp = CrossProduct::from_parts(std::slice::from_ref(x), pool.keys());
    let y = rounded_ciphertexts(model, &cp.messages, &cp.keys)?;
    Ok(y.values().chunks_exact(model.n_bits).map(row_bits).collect())
}

pub fn uniqueness(model: &AncModel, pool: &KeyPool, x: &BitVector) -> Result<UniquenessScore> {
    if pool.len() < 2 {
        return Err(AncError::Argument("uniqueness needs a pool of at least two keys".into()));
    }
    let table = ciphertext_table(model, pool, x)?;
    score_table(x.clone(), &table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniquenessReport {
    pub rows: Vec<UniquenessScore>,
    pub mean_uniqueness_pct: f64,
}

impl UniquenessReport {
    /// `message,s_x,u_x` rows with a header, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("message,s_x,u_x\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.4},{:.4}", r.message.to_hex(), r.similarity_pct, r.uniqueness_pct);
        }
        s
    }

    /// Messages whose uniqueness falls below `threshold` percent.
    pub fn below(&self, threshold: f64) -> Vec<&UniquenessScore> {
        self.rows.iter().filter(|r| r.uniqueness_pct < threshold).collect()
    }
}

/// Uniqueness of every possible message.
pub fn uniqueness_report(model: &AncModel, pool: &KeyPool) -> Result<UniquenessReport> {
    check_dims(model, pool)?;
    if pool.len() < 2 {
        return Err(AncError::Argument("uniqueness needs a pool of at least two keys".into()));
    }
    let cp = CrossProduct::new(model.n_bits, pool)?;
    let y = rounded_ciphertexts(model, &cp.messages, &cp.keys)?;
    let n = model.n_bits;
    let per_message = cp.n_keys * n;
    let rows = y
        .values()
        .chunks_exact(per_message)
        .enumerate()
        .map(|(m, block)| {
            let table: Vec<BitVector> = block.chunks_exact(n).map(row_bits).collect();
            score_table(BitVector::from_value(m as u64, n), &table)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = rows.iter().map(|r| r.uniqueness_pct).sum::<f64>() / rows.len() as f64;
    Ok(UniquenessReport {
        rows,
        mean_uniqueness_pct: mean,
    })
}

/// Rounded ciphertexts for a small message × key grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossTab {
    pub messages: Vec<BitVector>,
    pub keys: Vec<Key>,
    /// `cells[m][k]` is the ciphertext of message `m` under key `k`.
    pub cells: Vec<Vec<BitVector>>,
}

impl CrossTab {
    pub fn all_distinct(&self) -> bool {
        let mut seen: Vec<u64> = self.cells.iter().flatten().map(BitVector::value).collect();
        let n = seen.len();
        seen.sort_unstable();
        seen.dedup();
        seen.len() == n
    }

    /// Fixed-width grid, one message per row, keys across.
    pub fn render(&self) -> String {
        let mut s = String::from("x \\ k");
        for k in &self.keys {
            let _ = write!(s, "  0x{}", k.to_hex());
        }
        s.push('\n');
        for (m, row) in self.messages.iter().zip(&self.cells) {
            let _ = write!(s, "0x{:<3}", m.to_hex());
            for c in row {
                let _ = write!(s, "  0x{}", c.to_hex());
            }
            s.push('\n');
        }
        s
    }
}

/// The four messages and four keys of the reference uniqueness table.
pub fn reference_grid(pool: &KeyPool) -> Result<(Vec<BitVector>, Vec<Key>)> {
    let n = pool.n_bits();
    let messages = ["FF", "00", "AA", "55"]
        .iter()
        .map(|h| BitVector::from_hex(h, n))
        .collect::<Result<Vec<_>>>()?;
    let keys = ["0F", "17", "1B", "1D"]
        .iter()
        .map(|h| {
            let bits = BitVector::from_hex(h, n)?;
            pool.find(&bits)
                .cloned()
                .ok_or_else(|| AncError::Key(format!("0x{h} is not in the key pool")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((messages, keys))
}

pub fn table1_crosstab(model: &AncModel, messages: &[BitVector], keys: &[Key]) -> Result<CrossTab> {
    if messages.iter().any(|m| m.len() != model.n_bits) || keys.iter().any(|k| k.bits().len() != model.n_bits) {
        return Err(AncError::Argument(format!("crosstab entries must be {} bits", model.n_bits)));
    }
    let cp = CrossProduct::from_parts(messages, keys);
    let y = rounded_ciphertexts(model, &cp.messages, &cp.keys)?;
    let flat: Vec<BitVector> = y.values().chunks_exact(model.n_bits).map(row_bits).collect();
    let cells = flat.chunks(keys.len().max(1)).map(<[BitVector]>::to_vec).collect();
    Ok(CrossTab {
        messages: messages.to_vec(),
        keys: keys.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keygen::generate_pool;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn untrained_model_is_near_chance() {
        let pool = generate_pool(8, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let model = AncModel::random_scaled(8, 8, 5, 77, 0.5, &mut rng);
        let acc = bit_recovery_accuracy(&model, &pool).unwrap();
        assert!((0.3..=0.7).contains(&acc), "{acc}");
    }

    #[test]
    fn cross_product_layout() {
        let pool = generate_pool(8, 5).unwrap();
        let cp = CrossProduct::new(8, &pool).unwrap();
        assert_eq!(cp.rows(), 256 * 70);
        // row 70 is message 1 with key 0
        let m1: Vec<f32> = bits_to_signal(&BitVector::from_value(1, 8));
        assert_eq!(cp.messages.row_slice(70), m1.as_slice());
        let k0: Vec<f32> = bits_to_signal(pool.keys()[0].bits());
        assert_eq!(cp.keys.row_slice(70), k0.as_slice());
    }

    #[test]
    fn mismatched_pool_is_rejected() {
        let pool = generate_pool(6, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = AncModel::random(8, 4, 5, 1, &mut rng);
        assert!(bit_recovery_accuracy(&model, &pool).is_err());
    }

    #[test]
    fn reference_grid_keys_are_in_pool() {
        let pool = generate_pool(8, 5).unwrap();
        let (m, k) = reference_grid(&pool).unwrap();
        assert_eq!(m[2].to_string(), "10101010");
        assert_eq!(k.len(), 4);
    }
}
