//! Byte-stream encryption with a trained 8-bit model.
//!
//! Every plaintext byte is encrypted independently under the same key, so
//! the ciphertext is exactly eight bits per byte with no padding or framing.
//! Bits are packed most significant first.

use crate::autodiff::Tensor;
use crate::bits::BitVector;
use crate::error::{AncError, Result};
use crate::keygen::Key;
use crate::layers::{bits_to_signal, round_signal, signal_bit};
use crate::networks::AncModel;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CipherStream {
    bytes: Vec<u8>,
    bit_len: usize,
    key_hex: String,
}

impl CipherStream {
    /// Wraps received bits; `bit_len` may not exceed the packed length.
    pub fn from_packed(bytes: Vec<u8>, bit_len: usize, key: &Key) -> Result<Self> {
        if bit_len > bytes.len() * 8 || bytes.len() * 8 - bit_len >= 8 {
            return Err(AncError::Framing(format!(
                "{bit_len} bits cannot be packed in {} bytes",
                bytes.len()
            )));
        }
        Ok(Self {
            bytes,
            bit_len,
            key_hex: key.to_hex(),
        })
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn packed(&self) -> &[u8] {
        &self.bytes
    }

    pub fn key_hex(&self) -> &str {
        &self.key_hex
    }

    pub fn into_packed(self) -> Vec<u8> {
        self.bytes
    }
}

/// A model and key validated for streaming.
pub struct StreamCipher<'a> {
    model: &'a AncModel,
    key: Key,
}

impl<'a> StreamCipher<'a> {
    pub fn new(model: &'a AncModel, key: &Key) -> Result<Self> {
        if model.n_bits != 8 {
            return Err(AncError::Argument(format!(
                "byte streams need an 8-bit model, this one is {}-bit",
                model.n_bits
            )));
        }
        if !model.converged {
            return Err(AncError::Refused("model has not converged".into()));
        }
        if key.bits().len() != model.n_bits || key.psl() > model.psl_tolerance {
            return Err(AncError::Key(format!(
                "0x{} is not a key this model was trained with",
                key.to_hex()
            )));
        }
        Ok(Self { model, key: key.clone() })
    }

    pub fn key(&self) -> &Key {
        &self.key
    }

    /// `N×8` ±1 signals of the plaintext bytes.
    pub fn plaintext_signals(bytes: &[u8]) -> Tensor<f32> {
        let mut v = Vec::with_capacity(bytes.len() * 8);
        for &b in bytes {
            v.extend(bits_to_signal::<f32>(&BitVector::from_value(b as u64, 8)));
        }
        Tensor::from_vec(bytes.len(), 8, v).expect("shape")
    }

    /// The key signal repeated for `rows` rows.
    pub fn key_signals(&self, rows: usize) -> Tensor<f32> {
        let k: Vec<f32> = bits_to_signal(self.key.bits());
        Tensor::from_vec(rows, 8, k.repeat(rows)).expect("shape")
    }

    /// Alice's rounded ciphertext signals.
    pub fn encrypt_signals(&self, x: &Tensor<f32>, k: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut y = blocked(x, k, |x, k| self.model.alice.encrypt_batch(x, k))?;
        y.values_mut().iter_mut().for_each(|v| *v = round_signal(*v));
        Ok(y)
    }

    pub fn decrypt_signals(&self, y: &Tensor<f32>, k: &Tensor<f32>) -> Result<Tensor<f32>> {
        blocked(y, k, |y, k| self.model.bob.decrypt_batch(y, k))
    }

    pub fn encrypt(&self, plaintext: &[u8]) -> Result<CipherStream> {
        if plaintext.is_empty() {
            return CipherStream::from_packed(Vec::new(), 0, &self.key);
        }
        let x = Self::plaintext_signals(plaintext);
        let k = self.key_signals(plaintext.len());
        let y = self.encrypt_signals(&x, &k)?;
        let bytes = pack(y.values());
        CipherStream::from_packed(bytes, plaintext.len() * 8, &self.key)
    }

    pub fn decrypt(&self, cipher: &CipherStream) -> Result<Vec<u8>> {
        if cipher.bit_len % 8 != 0 {
            return Err(AncError::Framing(format!(
                "{} ciphertext bits is not a whole number of bytes",
                cipher.bit_len
            )));
        }
        let n = cipher.bit_len / 8;
        if n == 0 {
            return Ok(Vec::new());
        }
        let y = Self::plaintext_signals(&cipher.bytes[..n]);
        let k = self.key_signals(n);
        let x = self.decrypt_signals(&y, &k)?;
        Ok(pack(x.values()))
    }
}

/// Rows per forward pass. Intermediates of a block stay in cache; one pass
/// over a whole long message does not.
const BLOCK_ROWS: usize = 32;

/// Applies `f` to row blocks of `a` and `b` and stacks the results.
fn blocked<F>(a: &Tensor<f32>, b: &Tensor<f32>, f: F) -> Result<Tensor<f32>>
where
    F: Fn(&Tensor<f32>, &Tensor<f32>) -> Result<Tensor<f32>>,
{
    if a.rows() <= BLOCK_ROWS || a.rows() != b.rows() || a.cols() != b.cols() {
        return f(a, b);
    }
    let cols = a.cols();
    let mut out = Vec::with_capacity(a.values().len());
    let mut out_cols = 0;
    for (ca, cb) in a
        .values()
        .chunks(BLOCK_ROWS * cols)
        .zip(b.values().chunks(BLOCK_ROWS * cols))
    {
        let rows = ca.len() / cols;
        let r = f(
            &Tensor::from_vec(rows, cols, ca.to_vec())?,
            &Tensor::from_vec(rows, cols, cb.to_vec())?,
        )?;
        out_cols = r.cols();
        out.extend_from_slice(r.values());
    }
    Tensor::from_vec(a.rows(), out_cols, out)
}

/// Packs the sign bits of `signals` eight at a time, MSB first.
fn pack(signals: &[f32]) -> Vec<u8> {
    signals
        .chunks_exact(8)
        .map(|c| c.iter().fold(0u8, |acc, &v| (acc << 1) | signal_bit(v) as u8))
        .collect()
}

pub fn encrypt_stream(model: &AncModel, key: &Key, plaintext: &[u8]) -> Result<CipherStream> {
    StreamCipher::new(model, key)?.encrypt(plaintext)
}

pub fn decrypt_stream(model: &AncModel, key: &Key, cipher: &CipherStream) -> Result<Vec<u8>> {
    StreamCipher::new(model, key)?.decrypt(cipher)
}
