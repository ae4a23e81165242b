//! Cryptographic primitives.
//!
//! Two key planes: RSA blind signatures (one keypair per denomination) for
//! accreditation, and Ed25519 identity keys for tokens, vendors, relays and
//! the issuer.

mod blind;
mod fdh;
mod identity;

pub use blind::{
    blind, blind_raw, blind_with_factor, sign_blinded, unblind, verify_accreditation, Accreditation,
    BlindedMessage, BlindingFactor, DenominationKeyPair, DenominationKeyset, DenominationPublicKey,
    KeyProfile, PublicKeyset,
};
pub use fdh::fdh_hash;
pub use identity::{IdentityKeyPair, KeyRole, PublicKey, Signature};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("no key registered for denomination {0}")]
    UnknownDenomination(u64),
    #[error("blinded value is out of range for the modulus")]
    OutOfRange,
    #[error("blinding factor is not invertible modulo n")]
    NotInvertible,
    #[error("invalid key material: {0}")]
    InvalidKey(String),
    #[error("prime generation failed: {0}")]
    KeyGeneration(String),
}
