//! Model bundle encoding.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | field                                       |
//! |-------|---------------------------------------------|
//! | 8     | magic `RANCMDL\0`                           |
//! | 4     | format version (`u32`, currently 1)         |
//! | 4     | bit count `N_b` (`u32`)                     |
//! | 4     | projection width `N_w` (`u32`)              |
//! | 8     | seed (`u64`)                                |
//! | 1     | flags: bit 0 converged, bit 1 Eve included  |
//! | 4     | key sidelobe tolerance (`u32`)              |
//! | 4     | training epochs (`u32`)                     |
//! | 4·n   | parameters as `f32`, row-major              |
//! | 4     | CRC-32 of every byte after the magic        |
//!
//! Parameters are written Alice, then Bob, then (optionally) Eve, each in
//! the order returned by [`Network::params`], weight before bias per layer.

use std::fs;
use std::path::Path;

use super::{AliceNet, AncModel, BobNet, EveNet, Network};
use crate::error::{FormatError, Result};

pub const MAGIC: [u8; 8] = *b"RANCMDL\0";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 + 4 + 4 + 8 + 1 + 4 + 4;
const FLAG_CONVERGED: u8 = 1;
const FLAG_EVE: u8 = 2;
const MAX_DIM: u32 = 4096;

impl AncModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let eve = self.eve.as_ref();
        let n_params = self.alice.param_count() + self.bob.param_count() + eve.map_or(0, |e| e.param_count());
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * n_params + 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_bits as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_proj as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        let mut flags = 0u8;
        if self.converged {
            flags |= FLAG_CONVERGED;
        }
        if eve.is_some() {
            flags |= FLAG_EVE;
        }
        out.push(flags);
        out.extend_from_slice(&self.psl_tolerance.to_le_bytes());
        out.extend_from_slice(&self.training_epochs.to_le_bytes());

        let mut params = self.alice.params();
        params.extend(self.bob.params());
        if let Some(e) = eve {
            params.extend(e.params());
        }
        for p in params {
            for v in p.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out[MAGIC.len()..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
            return Err(FormatError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(FormatError::Truncated {
                needed: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let n_bits = u32_at(12);
        let n_proj = u32_at(16);
        if n_bits == 0 || n_proj == 0 || n_bits > MAX_DIM || n_proj > MAX_DIM {
            return Err(FormatError::Dimension(format!("bits {n_bits}, projection width {n_proj}")));
        }
        let (n_bits, n_proj) = (n_bits as usize, n_proj as usize);
        let seed = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let flags = bytes[28];
        if flags & !(FLAG_CONVERGED | FLAG_EVE) != 0 {
            return Err(FormatError::Dimension(format!("unknown flag bits {flags:#04x}")));
        }
        let psl_tolerance = u32_at(29);
        let training_epochs = u32_at(33);

        // Shapes come from a zero-initialised model; values are overwritten.
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut alice = AliceNet::<f32>::random(n_bits, n_proj, &mut rng);
        let mut bob = BobNet::<f32>::random(n_bits, n_proj, &mut rng);
        let mut eve = (flags & FLAG_EVE != 0).then(|| EveNet::<f32>::random(n_bits, n_proj, &mut rng));

        let n_params = alice.param_count() + bob.param_count() + eve.as_ref().map_or(0, |e| e.param_count());
        let needed = HEADER_LEN + 4 * n_params + 4;
        if bytes.len() < needed {
            return Err(FormatError::Truncated {
                needed,
                found: bytes.len(),
            });
        }
        if bytes.len() > needed {
            return Err(FormatError::TrailingBytes(bytes.len() - needed));
        }
        let stored = u32_at(needed - 4);
        let computed = crc32fast::hash(&bytes[MAGIC.len()..needed - 4]);
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed });
        }

        let mut floats = bytes[HEADER_LEN..needed - 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let mut params = alice.params_mut();
        params.extend(bob.params_mut());
        if let Some(e) = eve.as_mut() {
            params.extend(e.params_mut());
        }
        for p in params {
            for v in p.tensor_mut().values_mut() {
                *v = floats.next().expect("length checked above");
            }
        }

        Ok(AncModel {
            alice,
            bob,
            eve,
            n_bits,
            n_proj,
            seed,
            psl_tolerance,
            converged: flags & FLAG_CONVERGED != 0,
            training_epochs,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(Self::from_bytes(&bytes)?)
    }
}
