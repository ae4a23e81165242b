//! Per-token chain index enforcing the first-seen, linear-chain rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical::Digest;
use crate::crypto::PublicKey;
use crate::ledger::RelayId;
use crate::token::{verify_transfer_chain, ChainFailure, IssuerPublicKeys, TransferSubmission};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SubmissionError {
    #[error("token is bound to another relay")]
    WrongRelay,
    #[error("chain tip has already advanced past this record's predecessor")]
    StalePrev { tip: Digest },
    #[error("record does not extend any known state of the token")]
    UnknownPrev,
    #[error("submitted chain does not match the accepted history")]
    ChainMismatch,
    #[error("record failed validation: {}", .failure.code())]
    Invalid { failure: ChainFailure },
}

/// Stateless record validation: relay binding plus full chain verification.
#[derive(Debug, Clone)]
pub struct RecordValidator {
    pub issuer: IssuerPublicKeys,
    pub relay_id: RelayId,
}

impl RecordValidator {
    pub fn validate(&self, sub: &TransferSubmission) -> Result<(), SubmissionError> {
        if sub.token.relay_id != self.relay_id {
            return Err(SubmissionError::WrongRelay);
        }
        let summary = verify_transfer_chain(&sub.token, &sub.full_chain(), &self.issuer, &sub.certificates);
        match summary.failure {
            None => Ok(()),
            Some(failure) => Err(SubmissionError::Invalid { failure }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TokenChain {
    token_digest: Digest,
    records: Vec<Digest>,
}

/// Accepted records per token. Each token's records form one chain with
/// contiguous hops starting at 0.
#[derive(Debug, Clone, Default)]
pub struct ChainIndex {
    chains: BTreeMap<PublicKey, TokenChain>,
}

impl ChainIndex {
    /// `(tip digest, accepted hop count)`; the tip of an unseen token is the
    /// token's own digest.
    pub fn tip(&self, token_id: &PublicKey, token_digest: Digest) -> (Digest, u64) {
        match self.chains.get(token_id) {
            Some(c) => (c.records.last().copied().unwrap_or(c.token_digest), c.records.len() as u64),
            None => (token_digest, 0),
        }
    }

    pub fn hops(&self, token_id: &PublicKey) -> Option<u64> {
        self.chains.get(token_id).map(|c| c.records.len() as u64)
    }

    pub fn records(&self, token_id: &PublicKey) -> &[Digest] {
        self.chains.get(token_id).map_or(&[], |c| c.records.as_slice())
    }

    /// Check that `sub` extends the current tip of its token.
    pub fn check_extends(&self, sub: &TransferSubmission) -> Result<(), SubmissionError> {
        let token_digest = sub.token.digest();
        let (tip, hops) = self.tip(&sub.token.token_pub, token_digest);
        let record = &sub.record;
        if record.prev != tip || record.hop != hops {
            let known = record.prev == token_digest || self.records(&sub.token.token_pub).contains(&record.prev);
            return Err(if known { SubmissionError::StalePrev { tip } } else { SubmissionError::UnknownPrev });
        }
        let submitted: Vec<Digest> = sub.chain.iter().map(|r| r.digest()).collect();
        if submitted.as_slice() != self.records(&sub.token.token_pub) {
            return Err(SubmissionError::ChainMismatch);
        }
        Ok(())
    }

    /// Append without checks; callers run [`check_extends`](Self::check_extends) first.
    pub fn append(&mut self, sub: &TransferSubmission) {
        let chain = self
            .chains
            .entry(sub.token.token_pub)
            .or_insert_with(|| TokenChain { token_digest: sub.token.digest(), records: Vec::new() });
        chain.records.push(sub.record.digest());
    }

    /// Validate and check linkage, then append.
    pub fn admit(&mut self, validator: &RecordValidator, sub: &TransferSubmission) -> Result<(), SubmissionError> {
        validator.validate(sub)?;
        self.check_extends(sub)?;
        self.append(sub);
        Ok(())
    }
}
