//! Permissioned ledger operated by the relays.
//!
//! Members replicate batches of transfer records. A rotating leader proposes
//! a batch, followers validate every record and recompute the batch root,
//! and a checkpoint is final once a quorum of distinct members has signed it.
//! Faults are crash faults; conflicting quorum checkpoints are detected, not
//! prevented.

mod checkpoint;
mod config;
pub mod consensus;
pub mod simnet;

pub use checkpoint::{
    detect_equivocation, issuer_verify_checkpoint, Checkpoint, CheckpointBody, CheckpointTracker,
    EquivocationAlarm, MemberSignature,
};
pub use config::{LedgerConfig, LedgerConfigError, RelayId};
