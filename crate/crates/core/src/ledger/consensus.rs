//! Per-member consensus state machine.
//!
//! Each height is decided in rounds. The proposer of round `r` at height `h`
//! is `config.leader(h, r)`. Round 0 proposes a fresh batch from the mempool.
//! When a round times out, members move to the next round and send the new
//! proposer a signed round-change carrying the last proposal they voted for;
//! the new proposer waits for a quorum of these and re-proposes the
//! highest-round voted batch unchanged (same checkpoint body), or a fresh one
//! if nobody voted. Members never vote in a round lower than one they have
//! moved to, so a batch that may have gathered a quorum is never replaced.
//!
//! The machine is driven by [`Member::submit`], [`Member::handle`] and
//! [`Member::tick`]; outgoing messages accumulate in an outbox drained with
//! [`Member::take_outbox`]. It does no I/O and reads no clock.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Checkpoint, CheckpointBody, LedgerConfig, MemberSignature};
use crate::canonical::{to_canonical, Digest};
use crate::crypto::{IdentityKeyPair, PublicKey, Signature};
use crate::history::{ChainIndex, RecordValidator, SubmissionError};
use crate::merkle::MerkleTree;
use crate::token::TransferSubmission;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchParams {
    /// Seal a batch this long after its first pending record.
    pub batch_interval_ms: u64,
    /// Or as soon as this many records are pending.
    pub batch_max: usize,
    /// Extra wait before abandoning a round.
    pub round_timeout_ms: u64,
}

impl Default for BatchParams {
    fn default() -> Self {
        Self { batch_interval_ms: 1_000, batch_max: 256, round_timeout_ms: 2_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub body: CheckpointBody,
    pub round: u64,
    pub proposer: PublicKey,
    pub entries: Vec<TransferSubmission>,
    pub signature: Signature,
}

#[derive(Serialize)]
struct ProposalStatement<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    body: &'a CheckpointBody,
    round: u64,
    proposer: &'a PublicKey,
}

impl Proposal {
    fn statement(&self) -> Vec<u8> {
        to_canonical(&ProposalStatement { kind: "proposal", body: &self.body, round: self.round, proposer: &self.proposer })
    }

    fn signed(body: CheckpointBody, round: u64, entries: Vec<TransferSubmission>, key: &IdentityKeyPair) -> Self {
        let mut p = Self { body, round, proposer: key.public, entries, signature: Signature([0; 64]) };
        p.signature = key.sign(&p.statement());
        p
    }

    fn signature_valid(&self) -> bool {
        self.proposer.verify(&self.statement(), &self.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub round: u64,
    pub body: CheckpointBody,
    pub signature: MemberSignature,
}

/// A member's last vote at the current height.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockedProposal {
    pub round: u64,
    pub proposal: Proposal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundChange {
    pub height: u64,
    pub round: u64,
    pub member: PublicKey,
    pub last_vote: Option<LockedProposal>,
    pub signature: Signature,
}

#[derive(Serialize)]
struct RoundChangeStatement<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    height: u64,
    round: u64,
    member: &'a PublicKey,
    last_vote: Option<(u64, Digest)>,
}

impl RoundChange {
    fn statement(&self) -> Vec<u8> {
        to_canonical(&RoundChangeStatement {
            kind: "round-change",
            height: self.height,
            round: self.round,
            member: &self.member,
            last_vote: self.last_vote.as_ref().map(|l| (l.round, Digest::of(&l.proposal))),
        })
    }
}

/// A finalized checkpoint with the batch it commits to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    pub checkpoint: Checkpoint,
    pub entries: Vec<TransferSubmission>,
}

impl Commit {
    pub fn record_digests(&self) -> Vec<Digest> {
        self.entries.iter().map(|e| e.record.digest()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Message {
    Submit { submission: TransferSubmission },
    Proposal { proposal: Proposal },
    Vote { vote: Vote },
    RoundChange { change: RoundChange },
    Commit { commit: Commit },
    SyncRequest { from_height: u64 },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Submit { .. } => "submit",
            Message::Proposal { .. } => "proposal",
            Message::Vote { .. } => "vote",
            Message::RoundChange { .. } => "round-change",
            Message::Commit { .. } => "commit",
            Message::SyncRequest { .. } => "sync-request",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub from: PublicKey,
    pub to: PublicKey,
    pub message: Message,
}

/// A mempool entry dropped because it conflicts with finalized history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pruned {
    pub record: Digest,
    pub reason: SubmissionError,
}

pub struct Member {
    key: IdentityKeyPair,
    config: LedgerConfig,
    params: BatchParams,
    validator: RecordValidator,

    commits: Vec<Commit>,
    index: ChainIndex,
    finalized: BTreeSet<Digest>,
    future_commits: BTreeMap<u64, Commit>,

    mempool: Vec<TransferSubmission>,
    pending_since: Option<u64>,
    pruned: Vec<Pruned>,

    round: u64,
    round_started: u64,
    last_vote: Option<LockedProposal>,
    proposal: Option<Proposal>,
    votes: BTreeMap<PublicKey, MemberSignature>,
    round_changes: BTreeMap<u64, BTreeMap<PublicKey, RoundChange>>,

    local: VecDeque<Message>,
    outbox: Vec<Envelope>,
}

impl std::fmt::Debug for Member {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Member")
            .field("key", &self.key.public)
            .field("height", &self.height())
            .field("round", &self.round)
            .field("mempool", &self.mempool.len())
            .finish_non_exhaustive()
    }
}

impl Member {
    pub fn new(
        key: IdentityKeyPair,
        config: LedgerConfig,
        validator: RecordValidator,
        params: BatchParams,
        now: u64,
    ) -> Self {
        Self {
            key,
            config,
            params,
            validator,
            commits: Vec::new(),
            index: ChainIndex::default(),
            finalized: BTreeSet::new(),
            future_commits: BTreeMap::new(),
            mempool: Vec::new(),
            pending_since: None,
            pruned: Vec::new(),
            round: 0,
            round_started: now,
            last_vote: None,
            proposal: None,
            votes: BTreeMap::new(),
            round_changes: BTreeMap::new(),
            local: VecDeque::new(),
            outbox: Vec::new(),
        }
    }

    /// Rebuild from persisted commits and the persisted last vote.
    pub fn restore(&mut self, commits: Vec<Commit>, last_vote: Option<LockedProposal>, now: u64) {
        for commit in commits {
            self.apply(commit, now);
        }
        self.last_vote = last_vote.filter(|l| l.proposal.body.height == self.height());
        if let Some(l) = &self.last_vote {
            self.round = l.round;
        }
    }

    pub fn id(&self) -> PublicKey {
        self.key.public
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    /// Next height to be decided (= number of finalized checkpoints).
    pub fn height(&self) -> u64 {
        self.commits.len() as u64
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn commits(&self) -> &[Commit] {
        &self.commits
    }

    pub fn last_vote(&self) -> Option<&LockedProposal> {
        self.last_vote.as_ref()
    }

    pub fn index(&self) -> &ChainIndex {
        &self.index
    }

    pub fn is_finalized(&self, record: &Digest) -> bool {
        self.finalized.contains(record)
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn take_outbox(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.outbox)
    }

    pub fn take_pruned(&mut self) -> Vec<Pruned> {
        std::mem::take(&mut self.pruned)
    }

    fn last_checkpoint_digest(&self) -> Digest {
        self.commits.last().map_or(Digest::ZERO, |c| c.checkpoint.digest())
    }

    fn send(&mut self, to: PublicKey, message: Message) {
        if to == self.key.public {
            self.local.push_back(message);
        } else {
            self.outbox.push(Envelope { from: self.key.public, to, message });
        }
    }

    fn broadcast(&mut self, message: Message) {
        for member in self.config.members.clone() {
            if member != self.key.public {
                self.send(member, message.clone());
            }
        }
    }

    fn drain_local(&mut self, now: u64) {
        while let Some(message) = self.local.pop_front() {
            self.process(self.key.public, message, now);
        }
        self.try_propose(now);
    }

    /// Accept a locally validated submission and gossip it to the ledger.
    pub fn submit(&mut self, submission: TransferSubmission, now: u64) {
        if self.add_to_mempool(submission.clone(), now) {
            self.broadcast(Message::Submit { submission });
        }
        self.drain_local(now);
    }

    pub fn handle(&mut self, envelope: Envelope, now: u64) {
        if envelope.to != self.key.public || !self.config.is_member(&envelope.from) {
            return;
        }
        self.process(envelope.from, envelope.message, now);
        self.drain_local(now);
    }

    pub fn tick(&mut self, now: u64) {
        let has_work = !self.mempool.is_empty() || self.last_vote.is_some() || self.proposal.is_some();
        if has_work {
            let started = self.round_started.max(self.pending_since.unwrap_or(0));
            let deadline = started + self.params.batch_interval_ms + self.params.round_timeout_ms;
            if now >= deadline {
                self.advance_round(self.round + 1, now);
            }
        }
        self.drain_local(now);
    }

    fn add_to_mempool(&mut self, submission: TransferSubmission, now: u64) -> bool {
        let digest = submission.record.digest();
        if self.finalized.contains(&digest) || self.mempool.iter().any(|s| s.record.digest() == digest) {
            return false;
        }
        if self.mempool.is_empty() {
            self.pending_since = Some(now);
        }
        self.mempool.push(submission);
        true
    }

    fn advance_round(&mut self, round: u64, now: u64) {
        self.round = round;
        self.round_started = now;
        self.proposal = None;
        self.votes.clear();
        let mut change = RoundChange {
            height: self.height(),
            round,
            member: self.key.public,
            last_vote: self.last_vote.clone(),
            signature: Signature([0; 64]),
        };
        change.signature = self.key.sign(&change.statement());
        self.broadcast(Message::RoundChange { change: change.clone() });
        self.send(self.key.public, Message::RoundChange { change });
    }

    fn process(&mut self, from: PublicKey, message: Message, now: u64) {
        match message {
            Message::Submit { submission } => {
                self.add_to_mempool(submission, now);
            }
            Message::Proposal { proposal } => self.on_proposal(from, proposal, now),
            Message::Vote { vote } => self.on_vote(vote, now),
            Message::RoundChange { change } => self.on_round_change(from, change, now),
            Message::Commit { commit } => self.on_commit(from, commit, now),
            Message::SyncRequest { from_height } => {
                for commit in self.commits.iter().skip(from_height as usize).cloned().collect::<Vec<_>>() {
                    self.send(from, Message::Commit { commit });
                }
            }
        }
    }

    fn behind(&mut self, from: PublicKey, height: u64) -> bool {
        if height > self.height() {
            let from_height = self.height();
            self.send(from, Message::SyncRequest { from_height });
            return true;
        }
        false
    }

    /// Validate a batch against finalized history, in order.
    fn batch_valid(&self, entries: &[TransferSubmission]) -> bool {
        let mut index = self.index.clone();
        !entries.is_empty() && entries.iter().all(|e| index.admit(&self.validator, e).is_ok())
    }

    fn batch_root(entries: &[TransferSubmission]) -> Option<Digest> {
        let digests: Vec<Digest> = entries.iter().map(|e| e.record.digest()).collect();
        MerkleTree::build(&digests).map(|t| t.root())
    }

    fn on_proposal(&mut self, from: PublicKey, p: Proposal, now: u64) {
        if self.behind(from, p.body.height) || p.body.height < self.height() {
            return;
        }
        let expected = self.config.leader(p.body.height, p.round);
        if p.proposer != expected || from != expected || !p.signature_valid() {
            return;
        }
        if p.round < self.round || self.last_vote.as_ref().is_some_and(|l| l.round >= p.round) {
            return;
        }
        // Only round 0 may introduce a new checkpoint leader.
        if p.round == 0 && p.body.leader != p.proposer {
            return;
        }
        if !self.config.is_member(&p.body.leader) || p.body.prev_checkpoint != self.last_checkpoint_digest() {
            return;
        }
        if Self::batch_root(&p.entries) != Some(p.body.root) || !self.batch_valid(&p.entries) {
            return;
        }
        if p.round > self.round {
            self.round = p.round;
            self.round_started = now;
        }
        let signature = p.body.sign(&self.key);
        let vote = Vote { round: p.round, body: p.body.clone(), signature };
        let proposer = p.proposer;
        self.last_vote = Some(LockedProposal { round: p.round, proposal: p });
        self.send(proposer, Message::Vote { vote });
    }

    fn on_vote(&mut self, vote: Vote, now: u64) {
        let Some(p) = &self.proposal else { return };
        if vote.round != p.round || vote.body != p.body {
            return;
        }
        if !self.config.is_member(&vote.signature.member) || !p.body.verify(&vote.signature) {
            return;
        }
        self.votes.insert(vote.signature.member, vote.signature);
        if self.votes.len() >= self.config.quorum as usize {
            let p = self.proposal.take().expect("checked above");
            let checkpoint = Checkpoint::new(p.body.clone(), self.votes.values().cloned().collect());
            let commit = Commit { checkpoint, entries: p.entries };
            self.broadcast(Message::Commit { commit: commit.clone() });
            self.apply(commit, now);
        }
    }

    fn on_round_change(&mut self, from: PublicKey, change: RoundChange, now: u64) {
        if change.member != from || !change.member.verify(&change.statement(), &change.signature) {
            return;
        }
        if change.height < self.height() {
            // The sender missed commits; replay them.
            for commit in self.commits.iter().skip(change.height as usize).cloned().collect::<Vec<_>>() {
                self.send(from, Message::Commit { commit });
            }
            return;
        }
        if self.behind(from, change.height) || change.round < self.round {
            return;
        }
        let round = change.round;
        self.round_changes.entry(round).or_default().insert(change.member, change);
        if round > self.round {
            // Crash faults only: one member timing out is reason enough to follow.
            self.advance_round(round, now);
        }
    }

    fn round_ready(&self) -> bool {
        self.round == 0
            || self.round_changes.get(&self.round).is_some_and(|m| m.len() >= self.config.quorum as usize)
    }

    /// Highest-round vote reported in this round's round-changes.
    fn locked_batch(&self) -> Option<&LockedProposal> {
        self.round_changes
            .get(&self.round)?
            .values()
            .filter_map(|c| c.last_vote.as_ref())
            .chain(self.last_vote.iter())
            .filter(|l| l.proposal.body.height == self.height())
            .max_by_key(|l| l.round)
    }

    fn try_propose(&mut self, now: u64) {
        if self.proposal.is_some() || self.config.leader(self.height(), self.round) != self.key.public || !self.round_ready() {
            return;
        }
        if self.last_vote.as_ref().is_some_and(|l| l.round >= self.round) {
            return;
        }
        let (body, entries) = if let Some(locked) = self.locked_batch() {
            (locked.proposal.body.clone(), locked.proposal.entries.clone())
        } else {
            let due = self.round > 0
                || self.mempool.len() >= self.params.batch_max
                || self.pending_since.is_some_and(|t| now >= t + self.params.batch_interval_ms);
            if !due {
                return;
            }
            let entries = self.select_batch();
            let Some(root) = Self::batch_root(&entries) else { return };
            let body = CheckpointBody {
                height: self.height(),
                root,
                prev_checkpoint: self.last_checkpoint_digest(),
                leader: self.key.public,
            };
            (body, entries)
        };
        let proposal = Proposal::signed(body, self.round, entries, &self.key);
        self.votes.clear();
        self.proposal = Some(proposal.clone());
        self.broadcast(Message::Proposal { proposal: proposal.clone() });
        // Vote for our own proposal through the normal path.
        self.local.push_back(Message::Proposal { proposal });
        self.drain_self(now);
    }

    fn drain_self(&mut self, now: u64) {
        while let Some(message) = self.local.pop_front() {
            self.process(self.key.public, message, now);
        }
    }

    /// Pick mempool entries that extend finalized history, pruning conflicts.
    fn select_batch(&mut self) -> Vec<TransferSubmission> {
        let mut index = self.index.clone();
        let mut batch = Vec::new();
        let mut keep = Vec::new();
        for sub in std::mem::take(&mut self.mempool) {
            if batch.len() >= self.params.batch_max {
                keep.push(sub);
                continue;
            }
            match index.admit(&self.validator, &sub) {
                Ok(()) => batch.push(sub.clone()),
                Err(SubmissionError::UnknownPrev) => {}
                Err(reason) => {
                    self.pruned.push(Pruned { record: sub.record.digest(), reason });
                    continue;
                }
            }
            keep.push(sub);
        }
        self.mempool = keep;
        batch
    }

    fn on_commit(&mut self, from: PublicKey, commit: Commit, now: u64) {
        let height = commit.checkpoint.height;
        if height < self.height() {
            return;
        }
        if !commit.checkpoint.has_quorum(&self.config) || Self::batch_root(&commit.entries) != Some(commit.checkpoint.root) {
            return;
        }
        if height > self.height() {
            self.future_commits.insert(height, commit);
            self.behind(from, height);
            return;
        }
        if commit.checkpoint.prev_checkpoint != self.last_checkpoint_digest() {
            return;
        }
        self.apply(commit, now);
        while let Some(next) = self.future_commits.remove(&self.height()) {
            if next.checkpoint.prev_checkpoint != self.last_checkpoint_digest() {
                break;
            }
            self.apply(next, now);
        }
    }

    fn apply(&mut self, commit: Commit, now: u64) {
        for entry in &commit.entries {
            self.index.append(entry);
            self.finalized.insert(entry.record.digest());
        }
        let index = &self.index;
        let finalized = &self.finalized;
        let mut pruned = Vec::new();
        self.mempool.retain(|s| {
            let d = s.record.digest();
            if finalized.contains(&d) {
                return false;
            }
            match index.check_extends(s) {
                Err(reason @ (SubmissionError::StalePrev { .. } | SubmissionError::ChainMismatch)) => {
                    pruned.push(Pruned { record: d, reason });
                    false
                }
                _ => true,
            }
        });
        self.pruned.extend(pruned);
        self.pending_since = if self.mempool.is_empty() { None } else { Some(now) };
        self.commits.push(commit);
        self.round = 0;
        self.round_started = now;
        self.last_vote = None;
        self.proposal = None;
        self.votes.clear();
        self.round_changes.clear();
    }
}
