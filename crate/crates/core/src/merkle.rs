//! Binary Merkle tree over a batch of record digests.
//!
//! Leaves are `SHA-256(0x00 || record_digest)`, inner nodes
//! `SHA-256(0x01 || left || right)`. A node without a sibling at some level is
//! promoted to the next level unchanged, so a path may be shorter than the
//! tree height.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::canonical::Digest;

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

pub fn leaf_hash(record_digest: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([LEAF_PREFIX]);
    h.update(record_digest.0);
    Digest(h.finalize().into())
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE_PREFIX]);
    h.update(left.0);
    h.update(right.0);
    Digest(h.finalize().into())
}

/// Which side of the running hash the sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub sibling: Digest,
    pub side: Side,
}

/// Fold a record digest up an inclusion path.
pub fn root_from_path(record_digest: &Digest, path: &[PathStep]) -> Digest {
    path.iter().fold(leaf_hash(record_digest), |acc, step| match step.side {
        Side::Left => node_hash(&step.sibling, &acc),
        Side::Right => node_hash(&acc, &step.sibling),
    })
}

#[derive(Debug, Clone)]
pub struct MerkleTree {
    // levels[0] are leaf hashes; the last level holds only the root.
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    /// `None` for an empty batch.
    pub fn build(record_digests: &[Digest]) -> Option<Self> {
        if record_digests.is_empty() {
            return None;
        }
        let mut levels = vec![record_digests.iter().map(leaf_hash).collect::<Vec<_>>()];
        while levels.last().map_or(0, Vec::len) > 1 {
            let prev = levels.last().expect("non-empty");
            let next = prev
                .chunks(2)
                .map(|pair| match pair {
                    [l, r] => node_hash(l, r),
                    [odd] => *odd,
                    _ => unreachable!(),
                })
                .collect();
            levels.push(next);
        }
        Some(Self { levels })
    }

    pub fn root(&self) -> Digest {
        self.levels.last().expect("non-empty tree")[0]
    }

    pub fn len(&self) -> usize {
        self.levels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn proof(&self, index: usize) -> Option<Vec<PathStep>> {
        if index >= self.len() {
            return None;
        }
        let mut path = Vec::new();
        let mut idx = index;
        for level in &self.levels[..self.levels.len() - 1] {
            let sibling = idx ^ 1;
            if sibling < level.len() {
                let side = if idx % 2 == 0 { Side::Right } else { Side::Left };
                path.push(PathStep { sibling: level[sibling], side });
            }
            idx /= 2;
        }
        Some(path)
    }
}
