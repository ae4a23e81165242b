//! Token-level helpers over a [`Testbed`]: real blind issuance, direct
//! relay settlement, hand-built onward hops.

use eft_core::crypto::{blind, unblind, IdentityKeyPair, KeyRole};
use eft_core::fixtures::testbed::Testbed;
use eft_core::issuer::{AccreditationRequest, VendorRegistration};
use eft_core::relay::ProofStatus;
use eft_core::clock::Clock;
use eft_core::token::{
    accreditation_message, build_transfer, ProofOfProvenance, Token, TokenEvidence, TokenSecret, TransferSource,
    TransferSubmission, VendorCertificate,
};

/// Claim-backed tokens through the blind protocol against the issuer.
pub fn mint(tb: &mut Testbed, claim: &str, denominations: &[u64]) -> Vec<(Token, TokenSecret)> {
    let keys = tb.keys();
    let relay_id = keys.ledger.ledger_id();
    let mut pending = Vec::new();
    let mut blinded = Vec::new();
    for &d in denominations {
        let key = tb.fx.identity(KeyRole::ClaimantToken);
        let pk = keys.issuer.denominations.get(d).expect("denomination").clone();
        let (b, factor) = blind(&accreditation_message(&key.public, &relay_id), &pk, &mut tb.fx.rng);
        blinded.push(b);
        pending.push((key, factor, pk));
    }
    let resp = tb
        .issuer
        .issue_accreditations(AccreditationRequest { claim_id: claim.into(), blinded })
        .expect("issuance");
    pending
        .into_iter()
        .zip(resp.signatures)
        .map(|((key, factor, pk), sig)| {
            let accreditation = unblind(&sig.value, &factor, &pk).unwrap();
            let token = Token { token_pub: key.public, relay_id, denomination: pk.denomination, accreditation };
            assert!(token.verify_accreditation(&keys.issuer));
            (token, TokenSecret { token_priv: key, blinding: None })
        })
        .collect()
}

pub fn vendor(tb: &mut Testbed, category: &str, onward: bool) -> (IdentityKeyPair, VendorCertificate) {
    let key = tb.fx.identity(KeyRole::Vendor);
    let now = tb.clock.now_secs();
    let cert = tb
        .issuer
        .register_vendor(VendorRegistration {
            vendor_id: key.public,
            legal_name: "Shop".into(),
            registration_ref: format!("R-{}", &key.public.to_b64()[..6]),
            tax_category: category.into(),
            onward_transfer_allowed: Some(onward),
            valid_from: now - 86_400,
            valid_to: now + 365 * 86_400,
            kyc_attested: true,
        })
        .expect("vendor registration");
    (key, cert)
}

/// Submit, let the relay batch close, and return the proof.
pub fn settle(tb: &Testbed, sub: TransferSubmission) -> ProofOfProvenance {
    let digest = sub.record.digest();
    tb.relay.submit_transfer(sub).expect("relay accepts");
    tb.clock.advance(1_000);
    match tb.relay.get_proof(&digest) {
        Some(ProofStatus::Finalized { proof }) => proof,
        other => panic!("not finalized: {other:?}"),
    }
}

pub fn pay(tb: &Testbed, token: &Token, secret: &TokenSecret, cert: &VendorCertificate) -> TokenEvidence {
    let sub = tb.fx.first_spend(token, secret, cert, tb.clock.now_secs());
    let proof = settle(tb, sub.clone());
    TokenEvidence { token: token.clone(), chain: vec![sub.record], proofs: vec![proof], certificates: vec![cert.clone()] }
}

/// Extend `ev` by one hop from `holder` to the holder of `to`.
pub fn onward_submission(
    tb: &Testbed,
    ev: &TokenEvidence,
    holder: &IdentityKeyPair,
    holder_cert: &VendorCertificate,
    to: &VendorCertificate,
) -> TransferSubmission {
    let tip = ev.chain.last().expect("paid token");
    let record = build_transfer(
        TransferSource::Record(tip),
        to,
        holder,
        Some(holder_cert),
        &tb.fx.issuer.public,
        tb.clock.now_secs(),
    )
    .expect("onward transfer");
    let mut certificates = ev.certificates.clone();
    certificates.push(to.clone());
    TransferSubmission { token: ev.token.clone(), chain: ev.chain.clone(), record, certificates }
}
