//! Chaum RSA blind signatures with a full-domain hash.

use std::collections::BTreeMap;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::{fdh_hash, CryptoError};
use crate::canonical::hex_biguint;

const PUBLIC_EXPONENT: u32 = 65537;

/// Modulus size selection.
///
/// `Toy` keys are only for tests and desk-scale demonstrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyProfile {
    Toy,
    Production,
}

impl KeyProfile {
    pub fn modulus_bits(self) -> usize {
        match self {
            KeyProfile::Toy => 64,
            KeyProfile::Production => 2048,
        }
    }
}

impl std::str::FromStr for KeyProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy" => Ok(KeyProfile::Toy),
            "production" => Ok(KeyProfile::Production),
            other => Err(format!("unknown key profile {other:?}")),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenominationPublicKey {
    pub denomination: u64,
    #[serde(with = "hex_biguint")]
    pub n: BigUint,
    #[serde(with = "hex_biguint")]
    pub e: BigUint,
}

impl std::fmt::Debug for DenominationPublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DenominationPublicKey({} / {} bits)", self.denomination, self.n.bits())
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct DenominationKeyPair {
    pub public: DenominationPublicKey,
    #[serde(with = "hex_biguint")]
    d: BigUint,
}

impl std::fmt::Debug for DenominationKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenominationKeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

impl DenominationKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(
        denomination: u64,
        modulus_bits: usize,
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        if modulus_bits < 32 {
            return Err(CryptoError::KeyGeneration(format!("{modulus_bits}-bit modulus is too small")));
        }
        let e = BigUint::from(PUBLIC_EXPONENT);
        loop {
            let p = random_prime(modulus_bits / 2, rng)?;
            let q = random_prime(modulus_bits - modulus_bits / 2, rng)?;
            if p == q {
                continue;
            }
            match Self::from_primes(denomination, &p, &q, &e) {
                Ok(pair) => return Ok(pair),
                Err(CryptoError::InvalidKey(_)) => continue,
                Err(other) => return Err(other),
            }
        }
    }

    /// Build a keypair from explicit primes, deriving
    /// `d = e^-1 mod lcm(p-1, q-1)`.
    pub fn from_primes(
        denomination: u64,
        p: &BigUint,
        q: &BigUint,
        e: &BigUint,
    ) -> Result<Self, CryptoError> {
        if p == q || p < &BigUint::from(2u8) || q < &BigUint::from(2u8) {
            return Err(CryptoError::InvalidKey("primes must be distinct".into()));
        }
        if denomination == 0 {
            return Err(CryptoError::InvalidKey("denomination must be positive".into()));
        }
        let one = BigUint::one();
        let lambda = (p - &one).lcm(&(q - &one));
        let d = e
            .modinv(&lambda)
            .ok_or_else(|| CryptoError::InvalidKey("e is not invertible modulo lambda".into()))?;
        Ok(Self { public: DenominationPublicKey { denomination, n: p * q, e: e.clone() }, d })
    }

    pub fn denomination(&self) -> u64 {
        self.public.denomination
    }
}

fn random_prime<R: RngCore + CryptoRng>(bits: usize, rng: &mut R) -> Result<BigUint, CryptoError> {
    if bits >= 128 {
        return glass_pumpkin::prime::from_rng(bits, rng)
            .map_err(|e| CryptoError::KeyGeneration(e.to_string()));
    }
    // Small primes for toy keys: force the top bit (keeps candidates above the
    // trial-division table) and search odd candidates.
    let top = BigUint::one() << (bits - 1);
    loop {
        let mut candidate = rng.gen_biguint(bits as u64) | &top | BigUint::one();
        while candidate.bits() as usize == bits {
            if glass_pumpkin::prime::check_with(&candidate, rng) {
                return Ok(candidate);
            }
            candidate += 2u32;
        }
    }
}

/// Secret blinding randomness; never leaves the wallet.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindingFactor {
    #[serde(with = "hex_biguint")]
    pub r: BigUint,
}

impl std::fmt::Debug for BlindingFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BlindingFactor(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedMessage {
    #[serde(with = "hex_biguint")]
    pub value: BigUint,
    pub denomination: u64,
}

/// Unblinded issuer signature over a token's accreditation message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accreditation {
    #[serde(with = "hex_biguint")]
    pub signature: BigUint,
    pub denomination: u64,
}

/// Blind `message` for signing under `key` with a fresh random factor.
pub fn blind<R: RngCore + CryptoRng>(
    message: &[u8],
    key: &DenominationPublicKey,
    rng: &mut R,
) -> (BlindedMessage, BlindingFactor) {
    let two = BigUint::from(2u8);
    let r = loop {
        let r = rng.gen_biguint_range(&two, &key.n);
        if r.gcd(&key.n).is_one() {
            break r;
        }
    };
    let factor = BlindingFactor { r };
    (blind_with_factor(message, key, &factor), factor)
}

/// Blind with a caller-chosen factor.
pub fn blind_with_factor(
    message: &[u8],
    key: &DenominationPublicKey,
    factor: &BlindingFactor,
) -> BlindedMessage {
    blind_raw(&fdh_hash(message, &key.n), key, factor)
}

/// Blind an already-hashed value: `hashed * r^e mod n`.
pub fn blind_raw(
    hashed: &BigUint,
    key: &DenominationPublicKey,
    factor: &BlindingFactor,
) -> BlindedMessage {
    let masked = factor.r.modpow(&key.e, &key.n);
    BlindedMessage { value: (hashed * masked) % &key.n, denomination: key.denomination }
}

/// `blinded^d mod n`.
pub fn sign_blinded(
    blinded: &BlindedMessage,
    key: &DenominationKeyPair,
) -> Result<BigUint, CryptoError> {
    if blinded.denomination != key.public.denomination {
        return Err(CryptoError::UnknownDenomination(blinded.denomination));
    }
    if blinded.value >= key.public.n {
        return Err(CryptoError::OutOfRange);
    }
    Ok(blinded.value.modpow(&key.d, &key.public.n))
}

/// Strip the blinding factor: `blind_sig * r^-1 mod n`.
pub fn unblind(
    blind_sig: &BigUint,
    factor: &BlindingFactor,
    key: &DenominationPublicKey,
) -> Result<Accreditation, CryptoError> {
    let inverse = factor.r.modinv(&key.n).ok_or(CryptoError::NotInvertible)?;
    Ok(Accreditation {
        signature: (blind_sig * inverse) % &key.n,
        denomination: key.denomination,
    })
}

/// `signature^e == FDH(message) (mod n)`, with the signature required to be
/// a reduced residue under a key of the claimed denomination.
pub fn verify_accreditation(
    message: &[u8],
    accreditation: &Accreditation,
    key: &DenominationPublicKey,
) -> bool {
    if accreditation.denomination != key.denomination || accreditation.signature >= key.n {
        return false;
    }
    if key.n.is_zero() {
        return false;
    }
    accreditation.signature.modpow(&key.e, &key.n) == fdh_hash(message, &key.n)
}

/// The issuer's private keys, one per denomination.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DenominationKeyset {
    keys: BTreeMap<u64, DenominationKeyPair>,
}

impl DenominationKeyset {
    pub fn generate<R: RngCore + CryptoRng>(
        denominations: &[u64],
        profile: KeyProfile,
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        Self::generate_with_bits(denominations, profile.modulus_bits(), rng)
    }

    pub fn generate_with_bits<R: RngCore + CryptoRng>(
        denominations: &[u64],
        modulus_bits: usize,
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        let mut keys = BTreeMap::new();
        for &denomination in denominations {
            keys.insert(denomination, DenominationKeyPair::generate(denomination, modulus_bits, rng)?);
        }
        Ok(Self { keys })
    }

    pub fn insert(&mut self, key: DenominationKeyPair) {
        self.keys.insert(key.denomination(), key);
    }

    pub fn get(&self, denomination: u64) -> Option<&DenominationKeyPair> {
        self.keys.get(&denomination)
    }

    pub fn sign_blinded(&self, blinded: &BlindedMessage) -> Result<BigUint, CryptoError> {
        let key = self
            .get(blinded.denomination)
            .ok_or(CryptoError::UnknownDenomination(blinded.denomination))?;
        sign_blinded(blinded, key)
    }

    pub fn public(&self) -> PublicKeyset {
        PublicKeyset { keys: self.keys.values().map(|k| k.public.clone()).collect() }
    }

    pub fn denominations(&self) -> impl Iterator<Item = u64> + '_ {
        self.keys.keys().copied()
    }
}

/// Published verification keys, sorted by denomination.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PublicKeyset {
    pub keys: Vec<DenominationPublicKey>,
}

impl PublicKeyset {
    pub fn get(&self, denomination: u64) -> Option<&DenominationPublicKey> {
        self.keys.iter().find(|k| k.denomination == denomination)
    }

    /// Denominations in ascending order.
    pub fn denominations(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self.keys.iter().map(|k| k.denomination).collect();
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    fn micro_key() -> DenominationKeyPair {
        DenominationKeyPair::from_primes(
            100,
            &BigUint::from(5u8),
            &BigUint::from(11u8),
            &BigUint::from(3u8),
        )
        .unwrap()
    }

    #[test]
    fn micro_key_has_expected_private_exponent() {
        // 3 * 7 = 21 = 1 mod lcm(4, 10)
        assert_eq!(micro_key().d, BigUint::from(7u8));
    }

    #[test]
    fn small_integer_blind_sign_unblind() {
        let key = micro_key();
        let r = BlindingFactor { r: BigUint::from(2u8) };
        let blinded = blind_raw(&BigUint::from(8u8), &key.public, &r);
        assert_eq!(blinded.value, BigUint::from(9u8));
        let sig = sign_blinded(&blinded, &key).unwrap();
        assert_eq!(sig, BigUint::from(4u8));
        let acc = unblind(&sig, &r, &key.public).unwrap();
        assert_eq!(acc.signature, BigUint::from(2u8));
        assert_eq!(acc.signature.modpow(&key.public.e, &key.public.n), BigUint::from(8u8));
    }

    #[test]
    fn sign_fixed_points() {
        let key = micro_key();
        for v in [0u8, 1] {
            let b = BlindedMessage { value: BigUint::from(v), denomination: 100 };
            assert_eq!(sign_blinded(&b, &key).unwrap(), BigUint::from(v));
        }
        let zero = blind_raw(&BigUint::zero(), &key.public, &BlindingFactor { r: BigUint::from(7u8) });
        assert!(zero.value.is_zero());
    }

    #[test]
    fn unit_factor_unblind_is_identity() {
        let key = micro_key();
        let acc = unblind(&BigUint::from(13u8), &BlindingFactor { r: BigUint::one() }, &key.public).unwrap();
        assert_eq!(acc.signature, BigUint::from(13u8));
    }

    #[test]
    fn non_invertible_factor_is_hard_failure() {
        let key = micro_key();
        let err = unblind(&BigUint::from(4u8), &BlindingFactor { r: BigUint::from(5u8) }, &key.public);
        assert_eq!(err.unwrap_err(), CryptoError::NotInvertible);
    }

    #[test]
    fn out_of_range_and_wrong_denomination_rejected() {
        let key = micro_key();
        let big = BlindedMessage { value: BigUint::from(55u8), denomination: 100 };
        assert_eq!(sign_blinded(&big, &key), Err(CryptoError::OutOfRange));
        let other = BlindedMessage { value: BigUint::from(3u8), denomination: 500 };
        assert_eq!(sign_blinded(&other, &key), Err(CryptoError::UnknownDenomination(500)));
    }

    #[test]
    fn toy_roundtrip_and_tamper() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let key = DenominationKeyPair::generate(500, 64, &mut rng).unwrap();
        assert_eq!(key.public.n.bits(), 64);
        let msg = b"token binding";
        let (blinded, factor) = blind(msg, &key.public, &mut rng);
        let sig = sign_blinded(&blinded, &key).unwrap();
        let acc = unblind(&sig, &factor, &key.public).unwrap();
        assert!(verify_accreditation(msg, &acc, &key.public));
        assert!(!verify_accreditation(b"other", &acc, &key.public));

        let tampered = unblind(&(sig + 1u8), &factor, &key.public).unwrap();
        assert!(!verify_accreditation(msg, &tampered, &key.public));
    }

    #[test]
    fn keyset_rejects_unknown_denomination() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ks = DenominationKeyset::generate(&[100, 500], KeyProfile::Toy, &mut rng).unwrap();
        let b = BlindedMessage { value: BigUint::from(3u8), denomination: 200 };
        assert_eq!(ks.sign_blinded(&b), Err(CryptoError::UnknownDenomination(200)));
        assert_eq!(ks.public().denominations(), vec![100, 500]);
    }
}
