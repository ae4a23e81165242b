use super::*;
use crate::clock::ManualClock;
use crate::crypto::KeyRole;
use crate::fixtures::Fixture;
use crate::token::{build_transfer, verify_pop, TransferSource, VendorCertificate};

struct Setup {
    fx: Fixture,
    clock: ManualClock,
    relay: RelayService,
    cert: VendorCertificate,
    config: RelayConfig,
}

fn setup(data_dir: Option<PathBuf>) -> Setup {
    let mut fx = Fixture::new(11);
    let key = fx.identity(KeyRole::Relay);
    let mut config = RelayConfig::standalone(key, fx.issuer_keys());
    config.data_dir = data_dir;
    let clock = ManualClock::new(1_000_000);
    let relay = RelayService::open(config.clone(), Arc::new(clock.clone()), None).unwrap();
    let vendor = fx.identity(KeyRole::Vendor);
    let cert = fx.certificate(&vendor, "food", true, 0, u64::MAX);
    Setup { fx, clock, relay, cert, config }
}

impl Setup {
    fn spend(&mut self) -> TransferSubmission {
        let (token, secret) = self.fx.token(1000, self.relay.relay_id());
        self.fx.first_spend(&token, &secret, &self.cert, 5)
    }

    fn seal(&self) {
        self.clock.advance(1_000);
        self.relay.step();
    }
}

#[test]
fn accepted_record_finalizes_with_valid_proof() {
    let mut s = setup(None);
    let sub = s.spend();
    let d = sub.record.digest();
    let receipt = s.relay.submit_transfer(sub).unwrap();
    assert_eq!(receipt.status, ReceiptStatus::Pending);
    assert!(matches!(s.relay.get_proof(&d), Some(ProofStatus::Pending { .. })));
    s.seal();
    let Some(ProofStatus::Finalized { proof }) = s.relay.get_proof(&d) else { panic!("not finalized") };
    assert!(verify_pop(&proof, s.relay.ledger()));
    assert_eq!(s.relay.receipt(&d).unwrap().height, Some(0));
}

#[test]
fn unknown_digest_is_not_found() {
    let s = setup(None);
    assert_eq!(s.relay.get_proof(&Digest::of_bytes(b"nothing")), None);
    let resp = s.relay.handle(ApiRequest::get(format!("/v1/proofs/{}", Digest::of_bytes(b"x").to_b64())));
    assert_eq!(resp.status, 404);
}

#[test]
fn second_spend_of_same_prev_is_stale() {
    let mut s = setup(None);
    let (token, secret) = s.fx.token(1000, s.relay.relay_id());
    let other = s.fx.identity(KeyRole::Vendor);
    let other_cert = s.fx.certificate(&other, "food", false, 0, u64::MAX);
    let a = s.fx.first_spend(&token, &secret, &s.cert, 5);
    let b = s.fx.first_spend(&token, &secret, &other_cert, 6);
    s.relay.submit_transfer(a.clone()).unwrap();
    let before = s.relay.token_status(&token.token_pub);
    let err = s.relay.submit_transfer(b).unwrap_err();
    assert_eq!(err.code, "stale-prev");
    assert_eq!(s.relay.token_status(&token.token_pub), before);
    assert_eq!(before, TokenStatus::Active { tip: a.record.digest(), hops: 1, finalized: false });
}

#[test]
fn resubmission_is_idempotent() {
    let mut s = setup(None);
    let sub = s.spend();
    let first = s.relay.submit_transfer(sub.clone()).unwrap();
    let again = s.relay.submit_transfer(sub.clone()).unwrap();
    assert_eq!(first, again);
    s.seal();
    let after = s.relay.submit_transfer(sub).unwrap();
    assert_eq!(after.status, ReceiptStatus::Finalized);
    assert_eq!(s.relay.checkpoint(None).unwrap().height, 0);
    assert_eq!(s.relay.height(), 1);
}

#[test]
fn wrong_relay_and_invalid_records_are_refused() {
    let mut s = setup(None);
    let (token, secret) = s.fx.token(1000, Digest::of_bytes(b"elsewhere"));
    let sub = s.fx.first_spend(&token, &secret, &s.cert, 5);
    assert_eq!(s.relay.submit_transfer(sub).unwrap_err().code, "wrong-relay");
    let mut bad = s.spend();
    bad.record.hop = 1;
    assert_eq!(s.relay.submit_transfer(bad).unwrap_err().code, "invalid-record");
}

#[test]
fn onward_hop_may_extend_a_pending_record() {
    let mut s = setup(None);
    let holder = s.fx.identity(KeyRole::Vendor);
    let holder_cert = s.fx.certificate(&holder, "wholesale", true, 0, u64::MAX);
    let supplier = s.fx.identity(KeyRole::Vendor);
    let supplier_cert = s.fx.certificate(&supplier, "wholesale", false, 0, u64::MAX);
    let (token, secret) = s.fx.token(1000, s.relay.relay_id());
    let hop0 = s.fx.first_spend(&token, &secret, &holder_cert, 5);
    s.relay.submit_transfer(hop0.clone()).unwrap();
    let rec = build_transfer(
        TransferSource::Record(&hop0.record),
        &supplier_cert,
        &holder,
        Some(&holder_cert),
        &s.fx.issuer.public,
        6,
    )
    .unwrap();
    let hop1 = TransferSubmission {
        token: token.clone(),
        chain: vec![hop0.record.clone()],
        record: rec,
        certificates: vec![holder_cert, supplier_cert],
    };
    assert_eq!(s.relay.submit_transfer(hop1.clone()).unwrap().hop, 1);
    s.seal();
    assert_eq!(s.relay.token_status(&token.token_pub), TokenStatus::Active {
        tip: hop1.record.digest(),
        hops: 2,
        finalized: true
    });
}

#[test]
fn eight_leaf_batch_proofs_have_three_steps() {
    let mut s = setup(None);
    let digests: Vec<Digest> = (0..8)
        .map(|_| {
            let sub = s.spend();
            s.relay.submit_transfer(sub).unwrap().record
        })
        .collect();
    s.seal();
    for d in &digests {
        let Some(ProofStatus::Finalized { proof }) = s.relay.get_proof(d) else { panic!() };
        assert_eq!(proof.path.len(), 3);
        assert!(verify_pop(&proof, s.relay.ledger()));
    }
}

#[test]
fn restart_keeps_accepted_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = setup(Some(dir.path().to_path_buf()));
    let a = s.spend();
    s.relay.submit_transfer(a.clone()).unwrap();
    s.seal();
    let b = s.spend();
    s.relay.submit_transfer(b.clone()).unwrap();
    let (token, secret) = s.fx.token(1000, s.relay.relay_id());
    let other = s.fx.identity(KeyRole::Vendor);
    let other_cert = s.fx.certificate(&other, "food", false, 0, u64::MAX);
    let c = s.fx.first_spend(&token, &secret, &s.cert, 5);
    let loser = s.fx.first_spend(&token, &secret, &other_cert, 6);
    s.relay.submit_transfer(c.clone()).unwrap();
    assert!(s.relay.submit_transfer(loser.clone()).is_err());
    // Simulated kill: drop without any shutdown path.
    let Setup { relay, config, clock, .. } = s;
    drop(relay);
    let relay = RelayService::open(config, Arc::new(clock.clone()), None).unwrap();
    assert_eq!(relay.height(), 1);
    assert_eq!(relay.receipt(&a.record.digest()).unwrap().status, ReceiptStatus::Finalized);
    assert_eq!(relay.receipt(&b.record.digest()).unwrap().status, ReceiptStatus::Pending);
    assert!(relay.receipt(&loser.record.digest()).is_none());
    assert_eq!(relay.submit_transfer(loser).unwrap_err().code, "stale-prev");
    clock.advance(1_000);
    relay.step();
    assert_eq!(relay.receipt(&b.record.digest()).unwrap().status, ReceiptStatus::Finalized);
    assert_eq!(relay.receipt(&c.record.digest()).unwrap().status, ReceiptStatus::Finalized);
    assert_eq!(relay.height(), 2);
}

#[test]
fn http_routes() {
    let mut s = setup(None);
    let sub = s.spend();
    let resp = s.relay.handle(ApiRequest::post("/v1/transfers", &sub));
    let receipt: PendingReceipt = resp.into_result().unwrap();
    assert_eq!(receipt.status, ReceiptStatus::Pending);
    let conflict = s.relay.handle(ApiRequest::post("/v1/transfers", &b"junk".to_vec()));
    assert_eq!(conflict.status, 400);
    s.seal();
    let cp: Checkpoint =
        s.relay.handle(ApiRequest::get("/v1/checkpoints/latest")).into_result().unwrap();
    let cp0: Checkpoint = s.relay.handle(ApiRequest::get("/v1/checkpoints/0")).into_result().unwrap();
    assert_eq!(cp, cp0);
    assert_eq!(s.relay.handle(ApiRequest::get("/v1/checkpoints/5")).status, 404);
    let status: TokenStatus = s
        .relay
        .handle(ApiRequest::get(format!("/v1/tokens/{}", sub.token.token_pub.to_b64())))
        .into_result()
        .unwrap();
    assert!(matches!(status, TokenStatus::Active { hops: 1, finalized: true, .. }));
}
