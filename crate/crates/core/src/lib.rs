//! Two-party asymmetric vertical federated learning.
//!
//! The crate covers the full pipeline: a commutative exponentiation cipher
//! ([`ph_cipher`]), asymmetric private set intersection ([`apsi`]), Paillier
//! encryption ([`hom_crypto`]), logistic regression training where the weak
//! party pads with encrypted zeros ([`avlr`]), message framing
//! ([`transport`]) and the experiment driver ([`harness`]).

pub mod apsi;
pub mod avlr;
pub mod error;
pub mod federation;
pub mod harness;
pub mod hom_crypto;
pub mod ph_cipher;
pub mod primes;
pub mod seeding;
pub mod transport;

pub(crate) mod hexser;

pub use error::{Error, ProtocolError, Result};
