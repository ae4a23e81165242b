//! Passphrase encryption for the wallet store and its backups:
//! Argon2id key derivation, XChaCha20-Poly1305 sealing.

use argon2::{Algorithm, Argon2, Params, Version};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::canonical::{from_canonical, to_canonical};

const FORMAT: &str = "eft-sealed-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    pub m_cost_kib: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        Self { m_cost_kib: 19_456, t_cost: 2, p_cost: 1 }
    }
}

impl KdfParams {
    /// Cheap parameters for tests and demos.
    pub fn insecure_fast() -> Self {
        Self { m_cost_kib: 64, t_cost: 1, p_cost: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VaultError {
    #[error("wrong passphrase or tampered data")]
    BadPassphrase,
    #[error("malformed sealed blob: {0}")]
    Malformed(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    kdf: KdfParams,
    #[serde(with = "crate::canonical::b64")]
    salt: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct Sealed {
    header: Header,
    #[serde(with = "crate::canonical::b64")]
    nonce: Vec<u8>,
    #[serde(with = "crate::canonical::b64")]
    ciphertext: Vec<u8>,
}

/// A derived key bound to its salt, so repeated saves skip the KDF.
#[derive(Clone)]
pub struct SealingKey {
    key: [u8; 32],
    salt: Vec<u8>,
    kdf: KdfParams,
}

impl std::fmt::Debug for SealingKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SealingKey").field("kdf", &self.kdf).finish_non_exhaustive()
    }
}

impl SealingKey {
    pub fn derive(passphrase: &str, salt: &[u8], kdf: KdfParams) -> Result<Self, VaultError> {
        let params = Params::new(kdf.m_cost_kib, kdf.t_cost, kdf.p_cost, Some(32))
            .map_err(|e| VaultError::Malformed(format!("kdf parameters: {e}")))?;
        let mut key = [0u8; 32];
        Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
            .hash_password_into(passphrase.as_bytes(), salt, &mut key)
            .map_err(|e| VaultError::Malformed(format!("kdf: {e}")))?;
        Ok(Self { key, salt: salt.to_vec(), kdf })
    }

    pub fn fresh<R: RngCore + CryptoRng>(passphrase: &str, kdf: KdfParams, rng: &mut R) -> Result<Self, VaultError> {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        Self::derive(passphrase, &salt, kdf)
    }

    fn header(&self) -> Header {
        Header { format: FORMAT.into(), kdf: self.kdf, salt: self.salt.clone() }
    }

    pub fn seal<R: RngCore + CryptoRng>(&self, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
        let header = self.header();
        let mut nonce = [0u8; 24];
        rng.fill_bytes(&mut nonce);
        let cipher = XChaCha20Poly1305::new(&self.key.into());
        let aad = to_canonical(&header);
        let ciphertext = cipher
            .encrypt(XNonce::from_slice(&nonce), Payload { msg: plaintext, aad: &aad })
            .expect("encryption of an in-memory buffer");
        to_canonical(&Sealed { header, nonce: nonce.to_vec(), ciphertext })
    }

    /// Open a blob sealed under this key's salt.
    pub fn open(&self, blob: &[u8]) -> Result<Vec<u8>, VaultError> {
        let sealed = parse(blob)?;
        if sealed.header.salt != self.salt || sealed.header.kdf != self.kdf {
            return Err(VaultError::BadPassphrase);
        }
        decrypt(&self.key, &sealed)
    }
}

fn parse(blob: &[u8]) -> Result<Sealed, VaultError> {
    let sealed: Sealed = from_canonical(blob).map_err(|e| VaultError::Malformed(e.to_string()))?;
    if sealed.header.format != FORMAT {
        return Err(VaultError::Malformed(format!("unknown format {}", sealed.header.format)));
    }
    if sealed.nonce.len() != 24 {
        return Err(VaultError::Malformed("nonce must be 24 bytes".into()));
    }
    Ok(sealed)
}

fn decrypt(key: &[u8; 32], sealed: &Sealed) -> Result<Vec<u8>, VaultError> {
    let cipher = XChaCha20Poly1305::new(key.into());
    let aad = to_canonical(&sealed.header);
    cipher
        .decrypt(XNonce::from_slice(&sealed.nonce), Payload { msg: &sealed.ciphertext, aad: &aad })
        .map_err(|_| VaultError::BadPassphrase)
}

/// Derive from the blob's own header and decrypt. Returns the key so the
/// caller can keep sealing under it.
pub fn open_with_passphrase(passphrase: &str, blob: &[u8]) -> Result<(Vec<u8>, SealingKey), VaultError> {
    let sealed = parse(blob)?;
    let key = SealingKey::derive(passphrase, &sealed.header.salt, sealed.header.kdf)?;
    let plaintext = decrypt(&key.key, &sealed)?;
    Ok((plaintext, key))
}
