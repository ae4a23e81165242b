use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::LedgerConfig;
use crate::canonical::{to_canonical, Digest};
use crate::crypto::{IdentityKeyPair, PublicKey, Signature};

/// The signed part of a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointBody {
    pub height: u64,
    pub root: Digest,
    pub prev_checkpoint: Digest,
    pub leader: PublicKey,
}

impl CheckpointBody {
    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }

    pub fn sign(&self, key: &IdentityKeyPair) -> MemberSignature {
        MemberSignature { member: key.public, signature: key.sign(&to_canonical(self)) }
    }

    pub fn verify(&self, sig: &MemberSignature) -> bool {
        sig.member.verify(&to_canonical(self), &sig.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberSignature {
    pub member: PublicKey,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub height: u64,
    pub root: Digest,
    pub prev_checkpoint: Digest,
    pub leader: PublicKey,
    /// Kept sorted by member key so the encoding is canonical.
    pub signatures: Vec<MemberSignature>,
}

impl Checkpoint {
    pub fn new(body: CheckpointBody, mut signatures: Vec<MemberSignature>) -> Self {
        signatures.sort_by(|a, b| a.member.cmp(&b.member));
        signatures.dedup_by(|a, b| a.member == b.member);
        Self {
            height: body.height,
            root: body.root,
            prev_checkpoint: body.prev_checkpoint,
            leader: body.leader,
            signatures,
        }
    }

    pub fn body(&self) -> CheckpointBody {
        CheckpointBody {
            height: self.height,
            root: self.root,
            prev_checkpoint: self.prev_checkpoint,
            leader: self.leader,
        }
    }

    /// Digest used for `prev_checkpoint` linkage. Signatures are excluded.
    pub fn digest(&self) -> Digest {
        self.body().digest()
    }

    /// Distinct ledger members whose signature over the body verifies.
    pub fn valid_signers(&self, config: &LedgerConfig) -> BTreeSet<PublicKey> {
        let body = self.body();
        self.signatures
            .iter()
            .filter(|s| config.is_member(&s.member) && body.verify(s))
            .map(|s| s.member)
            .collect()
    }

    pub fn has_quorum(&self, config: &LedgerConfig) -> bool {
        config.is_member(&self.leader) && self.valid_signers(config).len() >= config.quorum as usize
    }
}

/// Stateless form of the issuer's checkpoint check: quorum plus linkage to
/// the previously accepted checkpoint (`None` means `cp` must be genesis).
pub fn issuer_verify_checkpoint(
    cp: &Checkpoint,
    config: &LedgerConfig,
    last_accepted: Option<&Checkpoint>,
) -> bool {
    if !cp.has_quorum(config) {
        return false;
    }
    match last_accepted {
        None => cp.height == 0 && cp.prev_checkpoint == Digest::ZERO,
        Some(prev) => cp.height == prev.height + 1 && cp.prev_checkpoint == prev.digest(),
    }
}

/// Checkpoints the issuer has accepted, indexed by height.
///
/// Proofs may arrive out of height order, so a checkpoint is accepted when it
/// carries a quorum and is consistent with every already-accepted neighbour:
/// the one below must be its `prev_checkpoint`, the one above must point at
/// it, and an accepted checkpoint at the same height must be identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointTracker {
    config: LedgerConfig,
    accepted: BTreeMap<u64, Checkpoint>,
}

impl CheckpointTracker {
    pub fn new(config: LedgerConfig) -> Self {
        Self { config, accepted: BTreeMap::new() }
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn verify(&self, cp: &Checkpoint) -> bool {
        if !cp.has_quorum(&self.config) {
            return false;
        }
        if cp.height == 0 && cp.prev_checkpoint != Digest::ZERO {
            return false;
        }
        if let Some(same) = self.accepted.get(&cp.height) {
            return same.digest() == cp.digest();
        }
        if let Some(below) = cp.height.checked_sub(1).and_then(|h| self.accepted.get(&h)) {
            if cp.prev_checkpoint != below.digest() {
                return false;
            }
        }
        if let Some(above) = self.accepted.get(&(cp.height + 1)) {
            if above.prev_checkpoint != cp.digest() {
                return false;
            }
        }
        true
    }

    /// Returns `true` if the checkpoint is (now) accepted.
    pub fn accept(&mut self, cp: &Checkpoint) -> bool {
        if !self.verify(cp) {
            return false;
        }
        self.accepted.entry(cp.height).or_insert_with(|| cp.clone());
        true
    }

    pub fn get(&self, height: u64) -> Option<&Checkpoint> {
        self.accepted.get(&height)
    }

    pub fn latest(&self) -> Option<&Checkpoint> {
        self.accepted.values().next_back()
    }
}

/// Two quorum-valid checkpoints at one height with different roots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivocationAlarm {
    pub height: u64,
    pub roots: (Digest, Digest),
    /// Members whose valid signatures appear on both checkpoints.
    pub signers: Vec<PublicKey>,
}

pub fn detect_equivocation(checkpoints: &[Checkpoint], config: &LedgerConfig) -> Vec<EquivocationAlarm> {
    let mut by_height: BTreeMap<u64, Vec<(&Checkpoint, BTreeSet<PublicKey>)>> = BTreeMap::new();
    for cp in checkpoints.iter().filter(|cp| cp.has_quorum(config)) {
        by_height.entry(cp.height).or_default().push((cp, cp.valid_signers(config)));
    }
    let mut alarms = Vec::new();
    for (height, cps) in by_height {
        for (i, (a, sa)) in cps.iter().enumerate() {
            for (b, sb) in &cps[i + 1..] {
                if a.root == b.root {
                    continue;
                }
                let (lo, hi) = if a.root < b.root { (a.root, b.root) } else { (b.root, a.root) };
                if alarms.iter().any(|x: &EquivocationAlarm| x.height == height && x.roots == (lo, hi)) {
                    continue;
                }
                alarms.push(EquivocationAlarm {
                    height,
                    roots: (lo, hi),
                    signers: sa.intersection(sb).copied().collect(),
                });
            }
        }
    }
    alarms
}
