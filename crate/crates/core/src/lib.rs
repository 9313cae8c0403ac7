//! Adversarial neural cryptography built from projection layers.
//!
//! Alice encrypts an `N_b`-bit message under an `N_b`-bit key, Bob decrypts
//! with the same key, and Eve tries to recover the message from the
//! ciphertext alone. All three networks are made of projection, dot-product
//! and inverse-projection layers ([`layers`]) trained adversarially
//! ([`training`]) on a small reverse-mode differentiation engine
//! ([`autodiff`]).

pub mod autodiff;
pub mod bench;
pub mod bits;
pub mod error;
pub mod evaluation;
pub mod keygen;
pub mod layers;
pub mod networks;
pub mod stream;
pub mod training;

pub use bits::BitVector;
pub use error::{AncError, FormatError, Result};
pub use keygen::{generate_pool, Key, KeyPool};
pub use networks::AncModel;
pub use training::{TrainingConfig, TrainingReport};
