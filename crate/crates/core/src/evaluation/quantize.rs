//! Uniform quantizer for `[-1, 1]` signals.
//!
//! Each value maps to `q = round((2^N_q − 1)·(y + 1)/2)`, written as an
//! `N_q`-bit big-endian word; decoding applies `y = 2q/(2^N_q − 1) − 1`.
//! The encoder is the exact inverse of the decoder's affine map, so the
//! reconstruction error is at most half a step, `1/(2^N_q − 1)`.

use crate::error::{AncError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantizationConfig {
    n_steps_exponent: u32,
}

impl QuantizationConfig {
    /// `n_steps_exponent` is `N_q`, the word width in bits (1..=32).
    pub fn new(n_steps_exponent: u32) -> Result<Self> {
        if !(1..=32).contains(&n_steps_exponent) {
            return Err(AncError::Argument(format!(
                "quantization width must be in 1..=32, got {n_steps_exponent}"
            )));
        }
        Ok(Self { n_steps_exponent })
    }

    pub fn bits(&self) -> u32 {
        self.n_steps_exponent
    }

    /// `2^N_q − 1`, the largest code.
    pub fn max_code(&self) -> u64 {
        (1u64 << self.n_steps_exponent) - 1
    }

    /// Worst-case reconstruction error.
    pub fn error_bound(&self) -> f64 {
        1.0 / self.max_code() as f64
    }
}

/// Integer code of one value. Values outside `[-1, 1]` are rejected.
pub fn quantize_value(y: f64, cfg: QuantizationConfig) -> Result<u64> {
    if !y.is_finite() || !(-1.0..=1.0).contains(&y) {
        return Err(AncError::Argument(format!("quantizer input {y} outside [-1, 1]")));
    }
    let max = cfg.max_code() as f64;
    Ok(((y + 1.0) / 2.0 * max).round() as u64)
}

pub fn dequantize_value(q: u64, cfg: QuantizationConfig) -> f64 {
    2.0 * q as f64 / cfg.max_code() as f64 - 1.0
}

/// Concatenated big-endian `N_q`-bit words, one per input value.
pub fn quantize(y: &[f64], cfg: QuantizationConfig) -> Result<Vec<bool>> {
    let w = cfg.bits();
    let mut bits = Vec::with_capacity(y.len() * w as usize);
    for &v in y {
        let q = quantize_value(v, cfg)?;
        bits.extend((0..w).rev().map(|b| (q >> b) & 1 == 1));
    }
    Ok(bits)
}

pub fn dequantize(bits: &[bool], cfg: QuantizationConfig) -> Result<Vec<f64>> {
    let w = cfg.bits() as usize;
    if bits.len() % w != 0 {
        return Err(AncError::Framing(format!(
            "{} bits is not a multiple of the {w}-bit word size",
            bits.len()
        )));
    }
    Ok(bits
        .chunks_exact(w)
        .map(|word| {
            let q = word.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
            dequantize_value(q, cfg)
        })
        .collect())
}
