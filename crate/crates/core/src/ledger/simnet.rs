//! Deterministic in-process network for running ledger members.
//!
//! All members live in one process on a virtual millisecond clock. Message
//! delays and drops come from a seeded ChaCha stream, crashes from a fixed
//! schedule, so a seed plus a schedule fully determines the run and its trace.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::consensus::{BatchParams, Commit, Envelope, Member};
use super::LedgerConfig;
use crate::canonical::{to_canonical, Digest};
use crate::crypto::IdentityKeyPair;
use crate::history::RecordValidator;
use crate::token::{IssuerPublicKeys, TransferSubmission};

/// Member `member` is down from `from_ms` until `until_ms` (forever if `None`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashWindow {
    pub member: usize,
    pub from_ms: u64,
    pub until_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub quorum: u32,
    pub epoch_length: u64,
    pub min_delay_ms: u64,
    pub max_delay_ms: u64,
    pub drop_probability: f64,
    pub crashes: Vec<CrashWindow>,
    pub params: BatchParams,
    pub tick_ms: u64,
}

impl SimConfig {
    /// n = 4, q = 3 with 5–50 ms links and no loss.
    pub fn default_profile(seed: u64) -> Self {
        Self {
            seed,
            quorum: 3,
            epoch_length: 1,
            min_delay_ms: 5,
            max_delay_ms: 50,
            drop_probability: 0.0,
            crashes: Vec::new(),
            params: BatchParams { batch_interval_ms: 1_000, batch_max: 256, round_timeout_ms: 1_000 },
            tick_ms: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceEvent {
    Submit { t: u64, member: usize, record: Digest },
    Deliver { t: u64, from: usize, to: usize, kind: String },
    Drop { t: u64, from: usize, to: usize, kind: String },
    Commit { t: u64, member: usize, height: u64, root: Digest, checkpoint: Digest, records: usize },
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Scheduled {
    at: u64,
    seq: u64,
    to: usize,
    // Canonical bytes keep the heap ordering total and deterministic.
    envelope: Vec<u8>,
}

pub struct SimNet {
    config: SimConfig,
    ledger: LedgerConfig,
    members: Vec<Member>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    now: u64,
    next_tick: u64,
    seq: u64,
    rng: ChaCha20Rng,
    seen_heights: Vec<u64>,
    trace: Vec<TraceEvent>,
}

impl SimNet {
    pub fn new(config: SimConfig, keys: Vec<IdentityKeyPair>, issuer: IssuerPublicKeys) -> Self {
        let ledger = LedgerConfig::new(keys.iter().map(|k| k.public).collect(), config.quorum, config.epoch_length)
            .expect("simnet ledger config");
        let validator = RecordValidator { issuer, relay_id: ledger.ledger_id() };
        let members: Vec<Member> = keys
            .into_iter()
            .map(|k| Member::new(k, ledger.clone(), validator.clone(), config.params, 0))
            .collect();
        let rng = ChaCha20Rng::seed_from_u64(config.seed);
        let n = members.len();
        Self {
            config,
            ledger,
            members,
            queue: BinaryHeap::new(),
            now: 0,
            next_tick: 0,
            seq: 0,
            rng,
            seen_heights: vec![0; n],
            trace: Vec::new(),
        }
    }

    pub fn ledger(&self) -> &LedgerConfig {
        &self.ledger
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn is_down(&self, member: usize, at: u64) -> bool {
        self.config
            .crashes
            .iter()
            .any(|c| c.member == member && c.from_ms <= at && c.until_ms.is_none_or(|u| at < u))
    }

    /// Hand a submission to a member as if a client had posted it. Returns
    /// `false` if that member is down.
    pub fn submit(&mut self, member: usize, submission: TransferSubmission) -> bool {
        if self.is_down(member, self.now) {
            return false;
        }
        self.trace.push(TraceEvent::Submit { t: self.now, member, record: submission.record.digest() });
        self.members[member].submit(submission, self.now);
        self.after_step();
        true
    }

    pub fn run_until(&mut self, until_ms: u64) {
        loop {
            let next_msg = self.queue.peek().map(|Reverse(s)| s.at);
            let next = match next_msg {
                Some(at) if at < self.next_tick => at,
                _ => self.next_tick,
            };
            if next > until_ms {
                break;
            }
            self.now = next;
            if next_msg == Some(next) && next < self.next_tick {
                let Reverse(s) = self.queue.pop().expect("peeked");
                self.deliver(s);
            } else {
                for i in 0..self.members.len() {
                    if !self.is_down(i, self.now) {
                        self.members[i].tick(self.now);
                    }
                }
                self.next_tick += self.config.tick_ms;
            }
            self.after_step();
        }
        self.now = until_ms;
    }

    fn index_of(&self, key: &crate::crypto::PublicKey) -> usize {
        self.ledger.members.iter().position(|m| m == key).expect("member key")
    }

    fn deliver(&mut self, s: Scheduled) {
        let envelope: Envelope = crate::canonical::from_canonical(&s.envelope).expect("own encoding");
        let from = self.index_of(&envelope.from);
        let kind = envelope.message.kind().to_string();
        if self.is_down(s.to, self.now) {
            self.trace.push(TraceEvent::Drop { t: self.now, from, to: s.to, kind });
            return;
        }
        self.trace.push(TraceEvent::Deliver { t: self.now, from, to: s.to, kind });
        self.members[s.to].handle(envelope, self.now);
    }

    fn after_step(&mut self) {
        for i in 0..self.members.len() {
            let outbox = self.members[i].take_outbox();
            let down = self.is_down(i, self.now);
            for envelope in outbox {
                if down {
                    continue;
                }
                let to = self.index_of(&envelope.to);
                let delay = self.rng.gen_range(self.config.min_delay_ms..=self.config.max_delay_ms);
                let dropped = self.config.drop_probability > 0.0 && self.rng.gen_bool(self.config.drop_probability);
                if dropped {
                    self.trace.push(TraceEvent::Drop {
                        t: self.now,
                        from: i,
                        to,
                        kind: envelope.message.kind().to_string(),
                    });
                    continue;
                }
                self.seq += 1;
                self.queue.push(Reverse(Scheduled {
                    at: self.now + delay,
                    seq: self.seq,
                    to,
                    envelope: to_canonical(&envelope),
                }));
            }
            let _ = self.members[i].take_pruned();
            let height = self.members[i].height();
            while self.seen_heights[i] < height {
                let c = &self.members[i].commits()[self.seen_heights[i] as usize];
                self.trace.push(TraceEvent::Commit {
                    t: self.now,
                    member: i,
                    height: c.checkpoint.height,
                    root: c.checkpoint.root,
                    checkpoint: c.checkpoint.digest(),
                    records: c.entries.len(),
                });
                self.seen_heights[i] += 1;
            }
        }
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// Newline-delimited canonical JSON.
    pub fn trace_ndjson(&self) -> String {
        let mut out = String::new();
        for event in &self.trace {
            out.push_str(&crate::canonical::to_canonical_string(event));
            out.push('\n');
        }
        out
    }

    /// Every finalized commit seen at any member.
    pub fn all_commits(&self) -> Vec<&Commit> {
        self.members.iter().flat_map(|m| m.commits()).collect()
    }

    /// Height at which `record` was finalized, from any member's view.
    pub fn finalized_height(&self, record: &Digest) -> Option<u64> {
        self.all_commits()
            .into_iter()
            .find(|c| c.entries.iter().any(|e| &e.record.digest() == record))
            .map(|c| c.checkpoint.height)
    }

    /// Heights at which two finalized checkpoints disagree on the root.
    pub fn root_conflicts(&self) -> Vec<u64> {
        let mut by_height: std::collections::BTreeMap<u64, Digest> = Default::default();
        let mut conflicts = Vec::new();
        for c in self.all_commits() {
            let root = *by_height.entry(c.checkpoint.height).or_insert(c.checkpoint.root);
            if root != c.checkpoint.root && !conflicts.contains(&c.checkpoint.height) {
                conflicts.push(c.checkpoint.height);
            }
        }
        conflicts
    }

    pub fn max_height(&self) -> u64 {
        self.members.iter().map(Member::height).max().unwrap_or(0)
    }
}
