//! Seeded consensus workloads on the in-process network.

use eft_core::canonical::Digest;
use eft_core::crypto::KeyRole;
use eft_core::fixtures::Fixture;
use eft_core::ledger::simnet::{CrashWindow, SimConfig, SimNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const RECORDS: usize = 24;
pub const SUBMIT_WINDOW_MS: u64 = 12_000;
pub const RUN_MS: u64 = 40_000;

pub struct Outcome {
    pub net: SimNet,
    /// (record, height of the receiving member at submission)
    pub submitted: Vec<(Digest, u64)>,
}

impl Outcome {
    /// Records never finalized, or finalized more than `within` heights
    /// after the height they were submitted at.
    pub fn late_records(&self, within: u64) -> Vec<Digest> {
        self.submitted
            .iter()
            .filter(|(d, h0)| match self.net.finalized_height(d) {
                Some(h) => h >= h0 + within,
                None => true,
            })
            .map(|(d, _)| *d)
            .collect()
    }
}

/// Deterministic crash choice for a seed: `count` distinct members, all down from `at_ms`.
pub fn crashes_for(seed: u64, count: usize, at_ms: u64) -> Vec<CrashWindow> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xc4a5);
    let mut picked = Vec::new();
    while picked.len() < count {
        let m = rng.gen_range(0..4);
        if !picked.contains(&m) {
            picked.push(m);
        }
    }
    picked.into_iter().map(|member| CrashWindow { member, from_ms: at_ms, until_ms: None }).collect()
}

pub fn run(seed: u64, crashes: Vec<CrashWindow>) -> Outcome {
    let mut fx = Fixture::new(seed);
    let (keys, config) = fx.ledger(4, 3);
    let vendor = fx.identity(KeyRole::Vendor);
    let cert = fx.certificate(&vendor, "food", false, 0, u64::MAX);
    let mut sim = SimConfig::default_profile(seed);
    sim.crashes = crashes;
    let mut net = SimNet::new(sim, keys, fx.issuer_keys());

    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9));
    let mut times: Vec<u64> = (0..RECORDS).map(|_| rng.gen_range(0..SUBMIT_WINDOW_MS)).collect();
    times.sort_unstable();
    let mut submitted = Vec::new();
    for t in times {
        net.run_until(t);
        let (token, secret) = fx.token(500, config.ledger_id());
        let sub = fx.first_spend(&token, &secret, &cert, t);
        let digest = sub.record.digest();
        // Clients retry at another member if the first is down.
        let start = rng.gen_range(0..4usize);
        for k in 0..4 {
            let member = (start + k) % 4;
            let h0 = net.members()[member].height();
            if net.submit(member, sub.clone()) {
                submitted.push((digest, h0));
                break;
            }
        }
    }
    net.run_until(RUN_MS);
    Outcome { net, submitted }
}
