//! Key pool generation.
//!
//! A key is an `n_bits` sequence with as many ones as zeros whose peak
//! circular-autocorrelation sidelobe does not exceed a tolerance. The sidelobe
//! at shift `n` is `p[n] = Σ_i k[i]·k[(i+n) mod N]`, evaluated on the raw 0/1
//! bit values, and the peak is taken over the nonzero shifts `1..N`.
//!
//! The 0/1 convention matters. A balanced 8-bit key has four ones, so no
//! shift can align more than four of them: every balanced key has a sidelobe
//! of at most 4 and a tolerance of 5 keeps all `C(8,4) = 70` of them. Under
//! ±1 coding `0xAA` would score 8 at shift 2 and the pool would be smaller
//! than seventy.

use crate::bits::BitVector;
use crate::error::{AncError, Result};

/// Largest key length accepted for exhaustive enumeration.
pub const MAX_KEY_BITS: usize = 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Key {
    bits: BitVector,
    psl: u32,
}

impl Key {
    /// Validates `bits` as a balanced key within `tolerance`.
    pub fn new(bits: BitVector, tolerance: u32) -> Result<Self> {
        if bits.len() < 2 || bits.count_ones() * 2 != bits.len() {
            return Err(AncError::Key(format!("{bits} is not bit-balanced")));
        }
        let psl = psl(&bits);
        if psl > tolerance {
            return Err(AncError::Key(format!(
                "{} has peak sidelobe {psl} above tolerance {tolerance}",
                bits.to_hex()
            )));
        }
        Ok(Self { bits, psl })
    }

    pub fn bits(&self) -> &BitVector {
        &self.bits
    }

    pub fn psl(&self) -> u32 {
        self.psl
    }

    pub fn value(&self) -> u64 {
        self.bits.value()
    }

    pub fn to_hex(&self) -> String {
        self.bits.to_hex()
    }
}

/// Peak sidelobe of the circular autocorrelation over shifts `1..len`.
pub fn psl(bits: &BitVector) -> u32 {
    let b = bits.bits();
    let n = b.len();
    (1..n)
        .map(|shift| (0..n).filter(|&i| b[i] && b[(i + shift) % n]).count() as u32)
        .max()
        .unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPool {
    keys: Vec<Key>,
    n_bits: usize,
    tolerance: u32,
}

impl KeyPool {
    /// Builds a pool from explicit keys, sorting and validating them.
    pub fn from_keys(n_bits: usize, tolerance: u32, mut keys: Vec<Key>) -> Result<Self> {
        if let Some(k) = keys.iter().find(|k| k.bits.len() != n_bits) {
            return Err(AncError::Key(format!("{} is not {n_bits} bits long", k.to_hex())));
        }
        keys.sort_by_key(Key::value);
        if keys.windows(2).any(|w| w[0].value() == w[1].value()) {
            return Err(AncError::Key("duplicate key in pool".into()));
        }
        Ok(Self {
            keys,
            n_bits,
            tolerance,
        })
    }

    /// Parses one hex key per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, n_bits: usize, tolerance: u32) -> Result<Self> {
        let keys = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| Key::new(BitVector::from_hex(l, n_bits)?, tolerance))
            .collect::<Result<Vec<_>>>()?;
        Self::from_keys(n_bits, tolerance, keys)
    }

    /// One upper-case hex key per line, LF terminated.
    pub fn to_text(&self) -> String {
        self.keys.iter().map(|k| format!("{}\n", k.to_hex())).collect()
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn tolerance(&self) -> u32 {
        self.tolerance
    }

    pub fn find(&self, bits: &BitVector) -> Option<&Key> {
        self.keys.iter().find(|k| &k.bits == bits)
    }
}

/// Enumerates every `n_bits` pattern and keeps the balanced ones whose peak
/// sidelobe is within `tolerance`, in ascending numeric order.
pub fn generate_pool(n_bits: usize, tolerance: u32) -> Result<KeyPool> {
    if n_bits % 2 != 0 || n_bits == 0 {
        return Err(AncError::Argument(format!(
            "key length must be even and positive, got {n_bits}"
        )));
    }
    if n_bits > MAX_KEY_BITS {
        return Err(AncError::Argument(format!(
            "key length {n_bits} exceeds the enumeration cap of {MAX_KEY_BITS}"
        )));
    }
    let keys = (0..1u64 << n_bits)
        .filter(|v| v.count_ones() as usize * 2 == n_bits)
        .map(|v| BitVector::from_value(v, n_bits))
        .filter_map(|bits| {
            let p = psl(&bits);
            (p <= tolerance).then_some(Key { bits, psl: p })
        })
        .collect();
    Ok(KeyPool {
        keys,
        n_bits,
        tolerance,
    })
}
