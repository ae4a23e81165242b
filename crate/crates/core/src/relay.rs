//! Relay service: admits transfer records under the first-seen rule, feeds
//! them to its ledger member, and serves receipts, proofs and checkpoints.
//!
//! A standalone relay is a one-member ledger and seals batches on its own.
//! Sealing is driven by [`RelayService::step`], which the HTTP server calls on
//! a timer and every request calls lazily, so a relay with a manual clock is
//! fully deterministic.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Weak};
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::api::{ApiRequest, ApiResponse, Handler, Method, Rejection, Transport};
use crate::canonical::Digest;
use crate::clock::SharedClock;
use crate::crypto::{IdentityKeyPair, PublicKey};
use crate::history::{ChainIndex, RecordValidator, SubmissionError};
use crate::ledger::consensus::{BatchParams, Commit, Envelope, LockedProposal, Member};
use crate::ledger::{Checkpoint, LedgerConfig, RelayId};
use crate::merkle::MerkleTree;
use crate::storage::{read_json, write_atomic, EventLog, StorageError};
use crate::token::{IssuerPublicKeys, ProofOfProvenance, TransferSubmission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiptStatus {
    Pending,
    Finalized,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReceipt {
    pub record: Digest,
    pub token_id: PublicKey,
    pub hop: u64,
    pub status: ReceiptStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ProofStatus {
    Pending { receipt: PendingReceipt },
    Finalized { proof: ProofOfProvenance },
    Rejected { receipt: PendingReceipt },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum TokenStatus {
    Unseen,
    Active { tip: Digest, hops: u64, finalized: bool },
}

/// Rejection codes for a refused submission.
pub fn submission_code(e: &SubmissionError) -> &'static str {
    match e {
        SubmissionError::WrongRelay => "wrong-relay",
        SubmissionError::StalePrev { .. } => "stale-prev",
        SubmissionError::UnknownPrev => "unknown-prev",
        SubmissionError::ChainMismatch | SubmissionError::Invalid { .. } => "invalid-record",
    }
}

pub fn submission_rejection(e: &SubmissionError) -> Rejection {
    Rejection::new(submission_code(e), e.to_string()).with_details(e)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
enum RecordEvent {
    Accepted { submission: TransferSubmission },
    Rejected { record: Digest, reason: SubmissionError },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointEvent {
    checkpoint: Checkpoint,
    records: Vec<Digest>,
}

#[derive(Clone)]
pub struct RelayConfig {
    pub key: IdentityKeyPair,
    pub ledger: LedgerConfig,
    pub issuer: IssuerPublicKeys,
    pub params: BatchParams,
    /// Record log, checkpoint log and last vote live here; `None` is in-memory.
    pub data_dir: Option<PathBuf>,
    /// Endpoints of the other ledger members.
    pub peers: BTreeMap<PublicKey, String>,
}

impl RelayConfig {
    pub fn standalone(key: IdentityKeyPair, issuer: IssuerPublicKeys) -> Self {
        let ledger = LedgerConfig::standalone(key.public);
        Self { key, ledger, issuer, params: BatchParams::default(), data_dir: None, peers: BTreeMap::new() }
    }
}

struct State {
    member: Member,
    /// Finalized history plus accepted-but-pending records.
    accepted: ChainIndex,
    /// Accepted, not yet finalized, in acceptance order.
    pending: Vec<TransferSubmission>,
    receipts: BTreeMap<Digest, PendingReceipt>,
    record_log: EventLog<RecordEvent>,
    checkpoint_log: EventLog<CheckpointEvent>,
    vote_path: Option<PathBuf>,
    persisted_commits: usize,
    persisted_vote: Option<LockedProposal>,
    outbox: Vec<Envelope>,
}

pub struct RelayService {
    relay_id: RelayId,
    ledger: LedgerConfig,
    validator: RecordValidator,
    clock: SharedClock,
    transport: Option<Arc<dyn Transport>>,
    peers: BTreeMap<PublicKey, String>,
    state: Mutex<State>,
}

#[derive(Debug, thiserror::Error)]
pub enum RelayError {
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("relay key is not a member of the ledger")]
    NotMember,
    #[error("persisted log references unknown record {0}")]
    MissingRecord(Digest),
}

impl RelayService {
    /// Open (or create) a relay, replaying any persisted logs.
    pub fn open(
        config: RelayConfig,
        clock: SharedClock,
        transport: Option<Arc<dyn Transport>>,
    ) -> Result<Self, RelayError> {
        if !config.ledger.is_member(&config.key.public) {
            return Err(RelayError::NotMember);
        }
        let relay_id = config.ledger.ledger_id();
        let validator = RecordValidator { issuer: config.issuer.clone(), relay_id };
        let now = clock.now_ms();
        let mut member = Member::new(config.key.clone(), config.ledger.clone(), validator.clone(), config.params, now);

        let (record_log, record_events, checkpoint_log, checkpoint_events, vote_path, vote) = match &config.data_dir {
            Some(dir) => {
                let (rl, re) = EventLog::<RecordEvent>::open(dir.join("records.log"))?;
                let (cl, ce) = EventLog::<CheckpointEvent>::open(dir.join("checkpoints.log"))?;
                let vote_path = dir.join("last_vote.json");
                let vote: Option<LockedProposal> = read_json(&vote_path)?;
                (rl, re, cl, ce, Some(vote_path), vote)
            }
            None => (EventLog::memory(), Vec::new(), EventLog::memory(), Vec::new(), None, None),
        };

        let mut submissions: BTreeMap<Digest, TransferSubmission> = BTreeMap::new();
        let mut order = Vec::new();
        let mut rejected: BTreeMap<Digest, SubmissionError> = BTreeMap::new();
        for event in record_events {
            match event {
                RecordEvent::Accepted { submission } => {
                    let d = submission.record.digest();
                    order.push(d);
                    submissions.insert(d, submission);
                }
                RecordEvent::Rejected { record, reason } => {
                    rejected.insert(record, reason);
                }
            }
        }
        let mut commits = Vec::new();
        for event in &checkpoint_events {
            let entries = event
                .records
                .iter()
                .map(|d| submissions.get(d).cloned().ok_or(RelayError::MissingRecord(*d)))
                .collect::<Result<Vec<_>, _>>()?;
            commits.push(Commit { checkpoint: event.checkpoint.clone(), entries });
        }
        let persisted_commits = commits.len();
        member.restore(commits, vote.clone(), now);

        let mut state = State {
            member,
            accepted: ChainIndex::default(),
            pending: Vec::new(),
            receipts: BTreeMap::new(),
            record_log,
            checkpoint_log,
            vote_path,
            persisted_commits,
            persisted_vote: vote,
            outbox: Vec::new(),
        };
        for d in &order {
            let sub = &submissions[d];
            state.receipts.insert(*d, receipt_for(sub));
            if let Some(reason) = rejected.get(d) {
                mark_rejected(&mut state.receipts, d, reason);
            } else if !state.member.is_finalized(d) {
                state.pending.push(sub.clone());
            }
        }
        mark_finalized(&mut state, 0);
        for sub in state.pending.clone() {
            state.member.submit(sub, now);
        }
        let service = Self {
            relay_id,
            ledger: config.ledger,
            validator,
            clock,
            transport,
            peers: config.peers,
            state: Mutex::new(state),
        };
        {
            let mut st = service.state.lock();
            service.sync(&mut st)?;
        }
        Ok(service)
    }

    pub fn relay_id(&self) -> RelayId {
        self.relay_id
    }

    pub fn ledger(&self) -> &LedgerConfig {
        &self.ledger
    }

    /// Advance timers, persist progress and flush consensus traffic.
    pub fn step(&self) {
        {
            let mut st = self.state.lock();
            st.member.tick(self.clock.now_ms());
            if let Err(e) = self.sync(&mut st) {
                tracing::error!(error = %e, "relay persistence failed");
            }
        }
        self.flush();
    }

    /// Run `step` every `interval` until the service is dropped.
    pub fn start_ticker(self: &Arc<Self>, interval: Duration) {
        let weak: Weak<Self> = Arc::downgrade(self);
        std::thread::spawn(move || {
            while let Some(relay) = weak.upgrade() {
                relay.step();
                drop(relay);
                std::thread::sleep(interval);
            }
        });
    }

    pub fn submit_transfer(&self, submission: TransferSubmission) -> Result<PendingReceipt, Rejection> {
        let result = {
            let mut st = self.state.lock();
            let now = self.clock.now_ms();
            st.member.tick(now);
            self.sync(&mut st).map_err(storage_rejection)?;
            self.admit(&mut st, submission, now)
        };
        self.flush();
        result
    }

    fn admit(&self, st: &mut State, submission: TransferSubmission, now: u64) -> Result<PendingReceipt, Rejection> {
        let digest = submission.record.digest();
        if let Some(existing) = st.receipts.get(&digest) {
            // Idempotent resubmission.
            return Ok(existing.clone());
        }
        self.validator.validate(&submission).map_err(|e| submission_rejection(&e))?;
        st.accepted.check_extends(&submission).map_err(|e| submission_rejection(&e))?;
        // Durable before acknowledged.
        st.record_log
            .append(&RecordEvent::Accepted { submission: submission.clone() })
            .map_err(storage_rejection)?;
        st.accepted.append(&submission);
        st.pending.push(submission.clone());
        let receipt = receipt_for(&submission);
        st.receipts.insert(digest, receipt);
        st.member.submit(submission, now);
        self.sync(st).map_err(storage_rejection)?;
        Ok(st.receipts[&digest].clone())
    }

    pub fn receipt(&self, record: &Digest) -> Option<PendingReceipt> {
        self.step();
        self.state.lock().receipts.get(record).cloned()
    }

    pub fn get_proof(&self, record: &Digest) -> Option<ProofStatus> {
        self.step();
        let st = self.state.lock();
        let receipt = st.receipts.get(record)?.clone();
        Some(match receipt.status {
            ReceiptStatus::Pending => ProofStatus::Pending { receipt },
            ReceiptStatus::Rejected => ProofStatus::Rejected { receipt },
            ReceiptStatus::Finalized => {
                let height = receipt.height.expect("finalized receipts have a height");
                let leaf = receipt.leaf_index.expect("finalized receipts have a leaf index") as usize;
                let commit = &st.member.commits()[height as usize];
                let tree = MerkleTree::build(&commit.record_digests()).expect("committed batches are non-empty");
                ProofStatus::Finalized {
                    proof: ProofOfProvenance {
                        record: commit.entries[leaf].record.clone(),
                        leaf_index: leaf as u64,
                        path: tree.proof(leaf).expect("leaf in range"),
                        checkpoint: commit.checkpoint.clone(),
                    },
                }
            }
        })
    }

    pub fn token_status(&self, token_id: &PublicKey) -> TokenStatus {
        self.step();
        let st = self.state.lock();
        let records = st.accepted.records(token_id);
        match records.last() {
            None => TokenStatus::Unseen,
            Some(tip) => TokenStatus::Active {
                tip: *tip,
                hops: records.len() as u64,
                finalized: st.member.is_finalized(tip),
            },
        }
    }

    pub fn checkpoint(&self, height: Option<u64>) -> Option<Checkpoint> {
        self.step();
        let st = self.state.lock();
        let commits = st.member.commits();
        let commit = match height {
            Some(h) => commits.get(h as usize),
            None => commits.last(),
        };
        commit.map(|c| c.checkpoint.clone())
    }

    pub fn height(&self) -> u64 {
        self.state.lock().member.height()
    }

    /// Deliver a consensus message from another member.
    pub fn inbox(&self, envelope: Envelope) {
        let mut st = self.state.lock();
        st.member.handle(envelope, self.clock.now_ms());
        if let Err(e) = self.sync(&mut st) {
            tracing::error!(error = %e, "relay persistence failed");
        }
    }

    /// Persist new commits and votes, settle receipts, queue outgoing messages.
    fn sync(&self, st: &mut State) -> Result<(), StorageError> {
        let first_new = st.persisted_commits;
        let commits = st.member.commits().len();
        if commits > first_new {
            for commit in &st.member.commits()[first_new..] {
                // Records finalized here may have arrived via gossip only.
                for entry in &commit.entries {
                    let d = entry.record.digest();
                    if !st.receipts.contains_key(&d) {
                        st.record_log.append(&RecordEvent::Accepted { submission: entry.clone() })?;
                        st.receipts.insert(d, receipt_for(entry));
                    }
                }
                st.checkpoint_log.append(&CheckpointEvent {
                    checkpoint: commit.checkpoint.clone(),
                    records: commit.record_digests(),
                })?;
            }
            st.persisted_commits = commits;
            mark_finalized(st, first_new);
        }
        let pruned = st.member.take_pruned();
        for p in &pruned {
            if st.receipts.get(&p.record).is_some_and(|r| r.status == ReceiptStatus::Pending) {
                st.record_log.append(&RecordEvent::Rejected { record: p.record, reason: p.reason.clone() })?;
                mark_rejected(&mut st.receipts, &p.record, &p.reason);
            }
        }
        if commits > first_new || !pruned.is_empty() {
            rebuild_accepted(st);
        }
        let vote = st.member.last_vote().cloned();
        if vote != st.persisted_vote {
            if let (Some(path), Some(v)) = (&st.vote_path, &vote) {
                // A vote must be durable before it leaves this process.
                write_atomic(path, v)?;
            }
            st.persisted_vote = vote;
        }
        let outgoing = st.member.take_outbox();
        st.outbox.extend(outgoing);
        Ok(())
    }

    fn flush(&self) {
        let outbox = std::mem::take(&mut self.state.lock().outbox);
        let Some(transport) = &self.transport else { return };
        for envelope in outbox {
            let Some(endpoint) = self.peers.get(&envelope.to) else { continue };
            let request = ApiRequest::post("/v1/consensus/inbox", &envelope);
            if let Err(e) = transport.send(endpoint, request) {
                tracing::debug!(error = %e, "consensus message not delivered");
            }
        }
    }
}

fn receipt_for(sub: &TransferSubmission) -> PendingReceipt {
    PendingReceipt {
        record: sub.record.digest(),
        token_id: sub.record.token_id,
        hop: sub.record.hop,
        status: ReceiptStatus::Pending,
        height: None,
        leaf_index: None,
        reason: None,
    }
}

fn mark_rejected(receipts: &mut BTreeMap<Digest, PendingReceipt>, record: &Digest, reason: &SubmissionError) {
    if let Some(r) = receipts.get_mut(record) {
        r.status = ReceiptStatus::Rejected;
        r.reason = Some(submission_code(reason).to_string());
    }
}

fn mark_finalized(st: &mut State, from_height: usize) {
    for commit in &st.member.commits()[from_height..] {
        for (leaf, entry) in commit.entries.iter().enumerate() {
            if let Some(r) = st.receipts.get_mut(&entry.record.digest()) {
                r.status = ReceiptStatus::Finalized;
                r.height = Some(commit.checkpoint.height);
                r.leaf_index = Some(leaf as u64);
                r.reason = None;
            }
        }
    }
    let finalized: Vec<Digest> = st.pending.iter().map(|s| s.record.digest()).filter(|d| st.member.is_finalized(d)).collect();
    st.pending.retain(|s| !finalized.contains(&s.record.digest()));
    rebuild_accepted(st);
}

/// Finalized history, then pending records that still extend it.
fn rebuild_accepted(st: &mut State) {
    let mut index = st.member.index().clone();
    let mut keep = Vec::new();
    for sub in std::mem::take(&mut st.pending) {
        let d = sub.record.digest();
        if st.receipts.get(&d).is_some_and(|r| r.status != ReceiptStatus::Pending) {
            continue;
        }
        if index.check_extends(&sub).is_ok() {
            index.append(&sub);
            keep.push(sub);
        }
    }
    st.pending = keep;
    st.accepted = index;
}

fn storage_rejection(e: StorageError) -> Rejection {
    Rejection::new("storage-failure", e.to_string())
}

impl Handler for RelayService {
    fn handle(&self, request: ApiRequest) -> ApiResponse {
        let segments = request.segments();
        match (request.method, segments.as_slice()) {
            (Method::Post, ["v1", "transfers"]) => {
                let submission: TransferSubmission = match request.json() {
                    Ok(s) => s,
                    Err(r) => return r,
                };
                match self.submit_transfer(submission) {
                    Ok(receipt) => ApiResponse::ok(&receipt),
                    Err(rejection) => {
                        let status = if rejection.code == "storage-failure" { 503 } else { 409 };
                        ApiResponse::reject(status, rejection)
                    }
                }
            }
            (Method::Get, ["v1", "proofs", digest]) => match Digest::from_b64(digest) {
                Ok(d) => self.get_proof(&d).map_or_else(ApiResponse::not_found, |p| ApiResponse::ok(&p)),
                Err(_) => ApiResponse::not_found(),
            },
            (Method::Get, ["v1", "tokens", id]) => match PublicKey::from_b64(id) {
                Ok(k) => ApiResponse::ok(&self.token_status(&k)),
                Err(_) => ApiResponse::not_found(),
            },
            (Method::Get, ["v1", "checkpoints", "latest"]) => {
                self.checkpoint(None).map_or_else(ApiResponse::not_found, |c| ApiResponse::ok(&c))
            }
            (Method::Get, ["v1", "checkpoints", height]) => match height.parse::<u64>() {
                Ok(h) => self.checkpoint(Some(h)).map_or_else(ApiResponse::not_found, |c| ApiResponse::ok(&c)),
                Err(_) => ApiResponse::not_found(),
            },
            (Method::Get, ["v1", "ledger"]) => ApiResponse::ok(&self.ledger),
            (Method::Post, ["v1", "consensus", "inbox"]) => {
                let envelope: Envelope = match request.json() {
                    Ok(e) => e,
                    Err(r) => return r,
                };
                self.inbox(envelope);
                ApiResponse::ok(&serde_json::json!({}))
            }
            _ => ApiResponse::not_found(),
        }
    }
}

#[cfg(test)]
mod tests;
