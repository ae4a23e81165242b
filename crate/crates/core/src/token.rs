//! Tokens, transfer records, vendor certificates and proofs of provenance,
//! with the pure validation logic every service shares.

use serde::{Deserialize, Serialize};

use crate::canonical::{to_canonical, Digest};
use crate::crypto::{
    verify_accreditation, Accreditation, BlindingFactor, IdentityKeyPair, PublicKey, PublicKeyset,
    Signature,
};
use crate::ledger::{Checkpoint, LedgerConfig, RelayId};
use crate::merkle::{root_from_path, PathStep};

/// Everything a verifier needs to know about the issuer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuerPublicKeys {
    pub identity: PublicKey,
    pub denominations: PublicKeyset,
}

/// A bearer token: the token public key bound to a relay, accredited at a
/// denomination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub token_pub: PublicKey,
    pub relay_id: RelayId,
    pub denomination: u64,
    pub accreditation: Accreditation,
}

impl Token {
    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }

    pub fn accreditation_message(&self) -> Vec<u8> {
        accreditation_message(&self.token_pub, &self.relay_id)
    }

    /// The accreditation verifies under the key for the token's denomination.
    pub fn verify_accreditation(&self, issuer: &IssuerPublicKeys) -> bool {
        self.accreditation.denomination == self.denomination
            && issuer
                .denominations
                .get(self.denomination)
                .is_some_and(|key| verify_accreditation(&self.accreditation_message(), &self.accreditation, key))
    }
}

#[derive(Serialize)]
struct AccreditMessage<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    token_pub: &'a PublicKey,
    relay_id: &'a RelayId,
}

/// Bytes the issuer blind-signs for a token.
pub fn accreditation_message(token_pub: &PublicKey, relay_id: &RelayId) -> Vec<u8> {
    to_canonical(&AccreditMessage { kind: "accredit", token_pub, relay_id })
}

/// Wallet-side secret for a token. Never part of a protocol message.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenSecret {
    pub token_priv: IdentityKeyPair,
    /// Held only until the accreditation has been unblinded and verified.
    pub blinding: Option<BlindingFactor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub token_id: PublicKey,
    pub prev: Digest,
    pub recipient_id: PublicKey,
    pub hop: u64,
    pub timestamp: u64,
    pub holder_sig: Signature,
}

#[derive(Serialize)]
struct TransferStatement<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    token_id: &'a PublicKey,
    prev: &'a Digest,
    recipient_id: &'a PublicKey,
    hop: u64,
    timestamp: u64,
}

impl TransferRecord {
    pub fn signing_bytes(&self) -> Vec<u8> {
        to_canonical(&TransferStatement {
            kind: "transfer",
            token_id: &self.token_id,
            prev: &self.prev,
            recipient_id: &self.recipient_id,
            hop: self.hop,
            timestamp: self.timestamp,
        })
    }

    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }

    fn signed(
        token_id: PublicKey,
        prev: Digest,
        recipient_id: PublicKey,
        hop: u64,
        timestamp: u64,
        signer: &IdentityKeyPair,
    ) -> Self {
        let mut record = Self {
            token_id,
            prev,
            recipient_id,
            hop,
            timestamp,
            holder_sig: Signature([0u8; 64]),
        };
        record.holder_sig = signer.sign(&record.signing_bytes());
        record
    }
}

/// Issuer-signed credential for a vendor identity key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorCertificate {
    pub vendor_id: PublicKey,
    pub legal_name: String,
    pub registration_ref: String,
    pub tax_category: String,
    pub onward_transfer_allowed: bool,
    pub valid_from: u64,
    pub valid_to: u64,
    pub issuer_sig: Signature,
}

/// Certificate fields covered by the issuer signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateBody {
    pub vendor_id: PublicKey,
    pub legal_name: String,
    pub registration_ref: String,
    pub tax_category: String,
    pub onward_transfer_allowed: bool,
    pub valid_from: u64,
    pub valid_to: u64,
}

impl CertificateBody {
    pub fn sign(self, issuer: &IdentityKeyPair) -> VendorCertificate {
        let issuer_sig = issuer.sign(&to_canonical(&self));
        VendorCertificate {
            vendor_id: self.vendor_id,
            legal_name: self.legal_name,
            registration_ref: self.registration_ref,
            tax_category: self.tax_category,
            onward_transfer_allowed: self.onward_transfer_allowed,
            valid_from: self.valid_from,
            valid_to: self.valid_to,
            issuer_sig,
        }
    }
}

impl VendorCertificate {
    pub fn body(&self) -> CertificateBody {
        CertificateBody {
            vendor_id: self.vendor_id,
            legal_name: self.legal_name.clone(),
            registration_ref: self.registration_ref.clone(),
            tax_category: self.tax_category.clone(),
            onward_transfer_allowed: self.onward_transfer_allowed,
            valid_from: self.valid_from,
            valid_to: self.valid_to,
        }
    }

    pub fn signature_valid(&self, issuer_pub: &PublicKey) -> bool {
        self.valid_from < self.valid_to && issuer_pub.verify(&to_canonical(&self.body()), &self.issuer_sig)
    }

    pub fn covers(&self, at: u64) -> bool {
        self.valid_from <= at && at <= self.valid_to
    }
}

/// Signature and validity window check.
pub fn verify_certificate(cert: &VendorCertificate, issuer_pub: &PublicKey, now: u64) -> bool {
    cert.signature_valid(issuer_pub) && cert.covers(now)
}

/// Merkle inclusion of a record under a quorum-signed checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofOfProvenance {
    pub record: TransferRecord,
    pub leaf_index: u64,
    pub path: Vec<PathStep>,
    pub checkpoint: Checkpoint,
}

pub fn verify_pop(pop: &ProofOfProvenance, ledger: &LedgerConfig) -> bool {
    root_from_path(&pop.record.digest(), &pop.path) == pop.checkpoint.root
        && pop.checkpoint.has_quorum(ledger)
}

/// A transfer record as submitted to a relay, with the context needed to
/// validate it: the token, the chain it extends and the certificates of every
/// recipient on the chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferSubmission {
    pub token: Token,
    pub chain: Vec<TransferRecord>,
    pub record: TransferRecord,
    pub certificates: Vec<VendorCertificate>,
}

impl TransferSubmission {
    pub fn full_chain(&self) -> Vec<TransferRecord> {
        let mut chain = self.chain.clone();
        chain.push(self.record.clone());
        chain
    }
}

/// What a new transfer extends.
#[derive(Debug, Clone, Copy)]
pub enum TransferSource<'a> {
    Token(&'a Token),
    Record(&'a TransferRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransferError {
    #[error("recipient certificate does not verify under the issuer key")]
    InvalidCertificate,
    #[error("recipient certificate is not valid at {0}")]
    CertificateNotCurrent(u64),
    #[error("signer is not the current holder of the token")]
    SignerMismatch,
    #[error("onward transfer requires the holder's certificate")]
    MissingSignerCertificate,
    #[error("holder's certificate does not permit onward transfer")]
    OnwardNotPermitted,
}

/// Sign a token (hop 0) or a held record (hop k+1) over to a certified vendor.
pub fn build_transfer(
    source: TransferSource<'_>,
    recipient_cert: &VendorCertificate,
    signer: &IdentityKeyPair,
    signer_cert: Option<&VendorCertificate>,
    issuer_pub: &PublicKey,
    now: u64,
) -> Result<TransferRecord, TransferError> {
    if !recipient_cert.signature_valid(issuer_pub) {
        return Err(TransferError::InvalidCertificate);
    }
    if !recipient_cert.covers(now) {
        return Err(TransferError::CertificateNotCurrent(now));
    }
    let (token_id, prev, hop) = match source {
        TransferSource::Token(token) => {
            if signer.public != token.token_pub {
                return Err(TransferError::SignerMismatch);
            }
            (token.token_pub, token.digest(), 0)
        }
        TransferSource::Record(prev) => {
            if signer.public != prev.recipient_id {
                return Err(TransferError::SignerMismatch);
            }
            let cert = signer_cert.ok_or(TransferError::MissingSignerCertificate)?;
            if cert.vendor_id != signer.public || !cert.signature_valid(issuer_pub) {
                return Err(TransferError::MissingSignerCertificate);
            }
            if !cert.onward_transfer_allowed {
                return Err(TransferError::OnwardNotPermitted);
            }
            (prev.token_id, prev.digest(), prev.hop + 1)
        }
    };
    Ok(TransferRecord::signed(token_id, prev, recipient_cert.vendor_id, hop, now, signer))
}

/// First reason a chain failed verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum ChainFailure {
    NoTransfer,
    BadAccreditation,
    TokenMismatch { hop: u64 },
    BrokenLink { hop: u64 },
    HopNumber { hop: u64 },
    BadSignature { hop: u64 },
    MissingCertificate { hop: u64 },
    OnwardNotAllowed { hop: u64 },
}

impl ChainFailure {
    pub fn code(&self) -> &'static str {
        match self {
            ChainFailure::NoTransfer => "no-transfer",
            ChainFailure::BadAccreditation => "bad-accreditation",
            ChainFailure::TokenMismatch { .. } => "token-mismatch",
            ChainFailure::BrokenLink { .. } => "broken-link",
            ChainFailure::HopNumber { .. } => "hop-number",
            ChainFailure::BadSignature { .. } => "bad-signature",
            ChainFailure::MissingCertificate { .. } => "missing-certificate",
            ChainFailure::OnwardNotAllowed { .. } => "onward-not-allowed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub final_holder: Option<PublicKey>,
    pub hops: usize,
    pub valid: bool,
    pub failure: Option<ChainFailure>,
}

impl ChainSummary {
    fn fail(failure: ChainFailure, hops: usize) -> Self {
        Self { final_holder: None, hops, valid: false, failure: Some(failure) }
    }
}

/// Find a certificate for `vendor` issued by the issuer and valid at `at`.
pub fn certificate_for<'a>(
    certs: &'a [VendorCertificate],
    vendor: &PublicKey,
    issuer_pub: &PublicKey,
    at: u64,
) -> Option<&'a VendorCertificate> {
    certs
        .iter()
        .find(|c| &c.vendor_id == vendor && c.covers(at) && c.signature_valid(issuer_pub))
}

/// Verify a token's accreditation and its full transfer chain. Certificates
/// must be valid at each record's own timestamp.
pub fn verify_transfer_chain(
    token: &Token,
    chain: &[TransferRecord],
    issuer: &IssuerPublicKeys,
    certs: &[VendorCertificate],
) -> ChainSummary {
    if !token.verify_accreditation(issuer) {
        return ChainSummary::fail(ChainFailure::BadAccreditation, chain.len());
    }
    if chain.is_empty() {
        return ChainSummary::fail(ChainFailure::NoTransfer, 0);
    }
    let mut expected_prev = token.digest();
    let mut holder = token.token_pub;
    for (i, record) in chain.iter().enumerate() {
        let hop = i as u64;
        if record.token_id != token.token_pub {
            return ChainSummary::fail(ChainFailure::TokenMismatch { hop }, chain.len());
        }
        if record.prev != expected_prev {
            return ChainSummary::fail(ChainFailure::BrokenLink { hop }, chain.len());
        }
        if record.hop != hop {
            return ChainSummary::fail(ChainFailure::HopNumber { hop }, chain.len());
        }
        if !holder.verify(&record.signing_bytes(), &record.holder_sig) {
            return ChainSummary::fail(ChainFailure::BadSignature { hop }, chain.len());
        }
        let Some(cert) = certificate_for(certs, &record.recipient_id, &issuer.identity, record.timestamp) else {
            return ChainSummary::fail(ChainFailure::MissingCertificate { hop }, chain.len());
        };
        if i + 1 < chain.len() && !cert.onward_transfer_allowed {
            return ChainSummary::fail(ChainFailure::OnwardNotAllowed { hop }, chain.len());
        }
        expected_prev = record.digest();
        holder = record.recipient_id;
    }
    ChainSummary { final_holder: Some(holder), hops: chain.len(), valid: true, failure: None }
}

/// A token with its whole transfer chain, an inclusion proof for every
/// record and the recipient certificates: everything needed to check a
/// holding without asking a relay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEvidence {
    pub token: Token,
    pub chain: Vec<TransferRecord>,
    pub proofs: Vec<ProofOfProvenance>,
    pub certificates: Vec<VendorCertificate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvidenceFailure {
    WrongLedger,
    Chain { failure: ChainFailure },
    MissingProof { hop: u64 },
}

impl TokenEvidence {
    pub fn final_holder(&self) -> Option<PublicKey> {
        self.chain.last().map(|r| r.recipient_id)
    }

    pub fn tip(&self) -> Option<&TransferRecord> {
        self.chain.last()
    }

    pub fn proof_for(&self, record: &TransferRecord) -> Option<&ProofOfProvenance> {
        self.proofs.iter().find(|p| p.record == *record)
    }

    /// Full offline check; returns the final holder. `checkpoint_ok` lets the
    /// caller add its own view of which checkpoints it trusts.
    pub fn verify(
        &self,
        issuer: &IssuerPublicKeys,
        ledger: &LedgerConfig,
        mut checkpoint_ok: impl FnMut(&Checkpoint) -> bool,
    ) -> Result<PublicKey, EvidenceFailure> {
        if self.token.relay_id != ledger.ledger_id() {
            return Err(EvidenceFailure::WrongLedger);
        }
        let summary = verify_transfer_chain(&self.token, &self.chain, issuer, &self.certificates);
        if let Some(failure) = summary.failure {
            return Err(EvidenceFailure::Chain { failure });
        }
        for record in &self.chain {
            let ok = self
                .proof_for(record)
                .is_some_and(|p| verify_pop(p, ledger) && checkpoint_ok(&p.checkpoint));
            if !ok {
                return Err(EvidenceFailure::MissingProof { hop: record.hop });
            }
        }
        Ok(summary.final_holder.expect("valid chains have a holder"))
    }
}

#[cfg(test)]
mod tests;
