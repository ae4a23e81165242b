use serde::{Deserialize, Serialize};

use crate::canonical::Digest;
use crate::crypto::PublicKey;

/// Identity a token is bound to at accreditation: the digest of the ledger
/// membership. A standalone relay is the one-member, quorum-one ledger.
pub type RelayId = Digest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerConfig {
    pub members: Vec<PublicKey>,
    pub quorum: u32,
    pub epoch_length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerConfigError {
    #[error("ledger needs at least one member")]
    NoMembers,
    #[error("quorum {quorum} must satisfy n/2 < q <= n for n = {members}")]
    BadQuorum { quorum: u32, members: usize },
    #[error("epoch length must be positive")]
    ZeroEpoch,
    #[error("duplicate member key")]
    DuplicateMember,
}

impl LedgerConfig {
    pub fn new(members: Vec<PublicKey>, quorum: u32, epoch_length: u64) -> Result<Self, LedgerConfigError> {
        let config = Self { members, quorum, epoch_length };
        config.validate()?;
        Ok(config)
    }

    /// Single relay acting alone.
    pub fn standalone(relay: PublicKey) -> Self {
        Self { members: vec![relay], quorum: 1, epoch_length: 1 }
    }

    pub fn validate(&self) -> Result<(), LedgerConfigError> {
        let n = self.members.len();
        if n == 0 {
            return Err(LedgerConfigError::NoMembers);
        }
        let q = self.quorum as usize;
        if 2 * q <= n || q > n {
            return Err(LedgerConfigError::BadQuorum { quorum: self.quorum, members: n });
        }
        if self.epoch_length == 0 {
            return Err(LedgerConfigError::ZeroEpoch);
        }
        let mut sorted = self.members.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n {
            return Err(LedgerConfigError::DuplicateMember);
        }
        Ok(())
    }

    pub fn ledger_id(&self) -> RelayId {
        Digest::of(self)
    }

    pub fn is_member(&self, key: &PublicKey) -> bool {
        self.members.contains(key)
    }

    /// Leader for a height, skipping ahead one member per timed-out round.
    pub fn leader(&self, height: u64, round: u64) -> PublicKey {
        let n = self.members.len() as u64;
        let slot = (height / self.epoch_length + round) % n;
        self.members[slot as usize]
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::crypto::{IdentityKeyPair, KeyRole};

    fn keys(n: usize) -> Vec<PublicKey> {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        (0..n).map(|_| IdentityKeyPair::generate(KeyRole::Relay, &mut rng).public).collect()
    }

    #[test]
    fn quorum_bounds() {
        let k = keys(4);
        assert!(LedgerConfig::new(k.clone(), 3, 1).is_ok());
        assert!(LedgerConfig::new(k.clone(), 4, 1).is_ok());
        assert!(matches!(LedgerConfig::new(k.clone(), 2, 1), Err(LedgerConfigError::BadQuorum { .. })));
        assert!(matches!(LedgerConfig::new(k.clone(), 5, 1), Err(LedgerConfigError::BadQuorum { .. })));
        assert_eq!(LedgerConfig::new(vec![], 1, 1), Err(LedgerConfigError::NoMembers));
        assert_eq!(LedgerConfig::new(vec![k[0], k[0], k[1]], 2, 1), Err(LedgerConfigError::DuplicateMember));
    }

    #[test]
    fn leader_rotation() {
        let k = keys(4);
        let c = LedgerConfig::new(k.clone(), 3, 2).unwrap();
        assert_eq!(c.leader(0, 0), k[0]);
        assert_eq!(c.leader(1, 0), k[0]);
        assert_eq!(c.leader(2, 0), k[1]);
        assert_eq!(c.leader(7, 0), k[3]);
        assert_eq!(c.leader(8, 0), k[0]);
        assert_eq!(c.leader(0, 1), k[1]);
        assert_eq!(c.leader(6, 2), k[1]);
    }
}
