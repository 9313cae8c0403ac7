use std::fmt;

use crate::error::{AncError, Result};

/// Fixed-length sequence of bits, most significant bit first.
///
/// `BitVector::from_value(0xAA, 8)` is `10101010`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector(Vec<bool>);

impl BitVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_value(value: u64, n_bits: usize) -> Self {
        assert!(n_bits <= 64);
        Self((0..n_bits).map(|i| (value >> (n_bits - 1 - i)) & 1 == 1).collect())
    }

    /// Parses hex such as `0xAA`, `aa` or `0F` into `n_bits` bits.
    pub fn from_hex(s: &str, n_bits: usize) -> Result<Self> {
        let t = s.trim();
        let digits = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
        let value = u64::from_str_radix(digits, 16)
            .map_err(|e| AncError::Argument(format!("bad hex '{s}': {e}")))?;
        if n_bits < 64 && value >> n_bits != 0 {
            return Err(AncError::Argument(format!("'{s}' does not fit in {n_bits} bits")));
        }
        Ok(Self::from_value(value, n_bits))
    }

    pub fn value(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    /// Upper-case hex, zero-padded to the bit length.
    pub fn to_hex(&self) -> String {
        let width = self.0.len().div_ceil(4).max(1);
        format!("{:0width$X}", self.value(), width = width)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn rotate_left(&self, m: usize) -> Self {
        let mut v = self.0.clone();
        if !v.is_empty() {
            let m = m % v.len();
            v.rotate_left(m);
        }
        Self(v)
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl From<Vec<bool>> for BitVector {
    fn from(v: Vec<bool>) -> Self {
        Self(v)
    }
}
