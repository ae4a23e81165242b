//! Emergency financing tokens.
//!
//! Claimants hold bearer tokens accredited by an issuer through RSA blind
//! signatures. Spending signs a token over to a certified vendor; relays
//! sequence those transfer records into a quorum-signed Merkle history and
//! hand back proofs of provenance. Vendors redeem with the issuer, which
//! enforces certificates, double-redemption prevention and tax withholding.

pub mod api;
pub mod canonical;
pub mod clock;
pub mod crypto;
pub mod fixtures;
pub mod history;
pub mod issuer;
pub mod ledger;
pub mod merchant;
pub mod merkle;
pub mod relay;
pub mod storage;
pub mod token;
pub mod wallet;
