use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::CryptoError;
use crate::canonical::fixed_bytes;

fixed_bytes!(
    /// Ed25519 verification key. A token's public key is its identifier.
    PublicKey,
    32
);

fixed_bytes!(
    /// Ed25519 signature.
    Signature,
    64
);

impl PublicKey {
    /// Strict Ed25519 verification; malformed keys verify nothing.
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        key.verify_strict(message, &sig).is_ok()
    }

    pub fn is_well_formed(&self) -> bool {
        VerifyingKey::from_bytes(&self.0).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyRole {
    ClaimantToken,
    Vendor,
    Issuer,
    Relay,
}

/// Identity keypair. The role tag is metadata, not key material.
#[derive(Clone, Serialize, Deserialize)]
pub struct IdentityKeyPair {
    pub public: PublicKey,
    #[serde(with = "crate::canonical::b64")]
    secret: Vec<u8>,
    pub role: KeyRole,
}

impl std::fmt::Debug for IdentityKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IdentityKeyPair")
            .field("public", &self.public)
            .field("role", &self.role)
            .finish_non_exhaustive()
    }
}

impl IdentityKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(role: KeyRole, rng: &mut R) -> Self {
        let signing = SigningKey::generate(rng);
        Self::from_signing(signing, role)
    }

    pub fn from_secret(secret: &[u8], role: KeyRole) -> Result<Self, CryptoError> {
        let bytes: [u8; 32] = secret
            .try_into()
            .map_err(|_| CryptoError::InvalidKey(format!("secret key must be 32 bytes, got {}", secret.len())))?;
        Ok(Self::from_signing(SigningKey::from_bytes(&bytes), role))
    }

    fn from_signing(signing: SigningKey, role: KeyRole) -> Self {
        Self {
            public: PublicKey(signing.verifying_key().to_bytes()),
            secret: signing.to_bytes().to_vec(),
            role,
        }
    }

    /// Check that a deserialized keypair is internally consistent.
    pub fn validate(&self) -> Result<(), CryptoError> {
        let rebuilt = Self::from_secret(&self.secret, self.role)?;
        if rebuilt.public != self.public {
            return Err(CryptoError::InvalidKey("public key does not match secret".into()));
        }
        Ok(())
    }

    pub fn secret_bytes(&self) -> &[u8] {
        &self.secret
    }

    /// Deterministic Ed25519 signature.
    pub fn sign(&self, message: &[u8]) -> Signature {
        let bytes: [u8; 32] = self.secret.as_slice().try_into().expect("validated secret length");
        Signature(SigningKey::from_bytes(&bytes).sign(message).to_bytes())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    #[test]
    fn sign_verify_and_bit_flips() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let key = IdentityKeyPair::generate(KeyRole::Vendor, &mut rng);
        let other = IdentityKeyPair::generate(KeyRole::Vendor, &mut rng);
        let msg = b"transfer".to_vec();
        let sig = key.sign(&msg);
        assert_eq!(sig, key.sign(&msg));
        assert!(key.public.verify(&msg, &sig));
        assert!(!other.public.verify(&msg, &sig));

        let mut flipped = msg.clone();
        flipped[0] ^= 1;
        assert!(!key.public.verify(&flipped, &sig));
        for bit in 0..512 {
            let mut s = sig;
            s.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!key.public.verify(&msg, &s), "bit {bit}");
        }
    }

    #[test]
    fn malformed_lengths_rejected() {
        assert!(IdentityKeyPair::from_secret(&[0u8; 31], KeyRole::Issuer).is_err());
        assert!(PublicKey::from_slice(&[0u8; 33]).is_err());
    }

    #[test]
    fn serde_roundtrip_keeps_key_usable() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let key = IdentityKeyPair::generate(KeyRole::Relay, &mut rng);
        let json = crate::canonical::to_canonical(&key);
        let back: IdentityKeyPair = crate::canonical::from_canonical(&json).unwrap();
        back.validate().unwrap();
        assert!(key.public.verify(b"m", &back.sign(b"m")));
    }
}
