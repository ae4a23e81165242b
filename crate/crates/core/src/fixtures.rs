//! Deterministic key material and ready-made tokens for tests and demos.

pub mod testbed;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::crypto::{blind, sign_blinded, unblind, DenominationKeyset, IdentityKeyPair, KeyRole};
use crate::ledger::{LedgerConfig, RelayId};
use crate::token::{
    accreditation_message, build_transfer, CertificateBody, IssuerPublicKeys, Token, TokenSecret, TransferSource,
    TransferSubmission, VendorCertificate,
};

pub const DEFAULT_DENOMINATIONS: [u64; 6] = [100, 500, 1000, 2000, 5000, 10000];

/// Toy issuer keys plus a seeded RNG.
pub struct Fixture {
    pub rng: ChaCha20Rng,
    pub keyset: DenominationKeyset,
    pub issuer: IdentityKeyPair,
}

impl Fixture {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keyset = DenominationKeyset::generate_with_bits(&DEFAULT_DENOMINATIONS, 64, &mut rng)
            .expect("toy key generation");
        let issuer = IdentityKeyPair::generate(KeyRole::Issuer, &mut rng);
        Self { rng, keyset, issuer }
    }

    pub fn issuer_keys(&self) -> IssuerPublicKeys {
        IssuerPublicKeys { identity: self.issuer.public, denominations: self.keyset.public() }
    }

    pub fn identity(&mut self, role: KeyRole) -> IdentityKeyPair {
        IdentityKeyPair::generate(role, &mut self.rng)
    }

    /// `n` relay keys and a ledger config over them.
    pub fn ledger(&mut self, n: usize, quorum: u32) -> (Vec<IdentityKeyPair>, LedgerConfig) {
        let keys: Vec<_> = (0..n).map(|_| self.identity(KeyRole::Relay)).collect();
        let config = LedgerConfig::new(keys.iter().map(|k| k.public).collect(), quorum, 1)
            .expect("valid ledger config");
        (keys, config)
    }

    pub fn certificate(
        &self,
        vendor: &IdentityKeyPair,
        tax_category: &str,
        onward_transfer_allowed: bool,
        valid_from: u64,
        valid_to: u64,
    ) -> VendorCertificate {
        CertificateBody {
            vendor_id: vendor.public,
            legal_name: "Fixture Vendor Ltd".into(),
            registration_ref: format!("REG-{}", &vendor.public.to_b64()[..8]),
            tax_category: tax_category.into(),
            onward_transfer_allowed,
            valid_from,
            valid_to,
        }
        .sign(&self.issuer)
    }

    /// Run the full blind accreditation protocol for a fresh token.
    pub fn token(&mut self, denomination: u64, relay_id: RelayId) -> (Token, TokenSecret) {
        let token_priv = self.identity(KeyRole::ClaimantToken);
        let key = self.keyset.get(denomination).expect("denomination in fixture keyset");
        let message = accreditation_message(&token_priv.public, &relay_id);
        let (blinded, factor) = blind(&message, &key.public, &mut self.rng);
        let sig = sign_blinded(&blinded, key).expect("in range");
        let accreditation = unblind(&sig, &factor, &key.public).expect("invertible");
        let token = Token { token_pub: token_priv.public, relay_id, denomination, accreditation };
        (token, TokenSecret { token_priv, blinding: None })
    }

    /// First hop of `token` to the holder of `recipient`.
    pub fn first_spend(
        &self,
        token: &Token,
        secret: &TokenSecret,
        recipient: &VendorCertificate,
        now: u64,
    ) -> TransferSubmission {
        let record = build_transfer(
            TransferSource::Token(token),
            recipient,
            &secret.token_priv,
            None,
            &self.issuer.public,
            now,
        )
        .expect("fixture transfer");
        TransferSubmission {
            token: token.clone(),
            chain: Vec::new(),
            record,
            certificates: vec![recipient.clone()],
        }
    }
}
