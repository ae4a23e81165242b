use super::*;
use crate::crypto::KeyRole;
use crate::fixtures::Fixture;
use crate::ledger::{CheckpointBody, LedgerConfig};
use crate::merkle::{MerkleTree, Side};

const T0: u64 = 1_700_000_000;
const DAY: u64 = 86_400;

struct World {
    fx: Fixture,
    relay_id: RelayId,
    vendor: IdentityKeyPair,
    vendor_cert: VendorCertificate,
    supplier: IdentityKeyPair,
    supplier_cert: VendorCertificate,
}

fn world(onward: bool) -> World {
    let mut fx = Fixture::new(21);
    let relay_id = Digest::of_bytes(b"relay");
    let vendor = fx.identity(KeyRole::Vendor);
    let supplier = fx.identity(KeyRole::Vendor);
    let vendor_cert = fx.certificate(&vendor, "essential-goods", onward, T0, T0 + DAY);
    let supplier_cert = fx.certificate(&supplier, "construction", false, T0, T0 + DAY);
    World { fx, relay_id, vendor, vendor_cert, supplier, supplier_cert }
}

#[test]
fn accreditation_message_golden_vector() {
    let zero = PublicKey([0u8; 32]);
    let bytes = accreditation_message(&zero, &Digest::ZERO);
    let golden = include_bytes!("../../testdata/accreditation_message_zero.json");
    assert_eq!(bytes.as_slice(), golden.as_slice());
    assert_eq!(
        format!("{:x}", Digest::of_bytes(&bytes)),
        "b931700df9ace7c208a0c5b05c039670754153460cb1e40417faa26c9cf9b844"
    );
    assert_ne!(bytes, accreditation_message(&zero, &Digest::of_bytes(b"other relay")));
}

#[test]
fn single_hop_chain_is_valid() {
    let mut w = world(false);
    let (token, secret) = w.fx.token(5000, w.relay_id);
    let issuer = w.fx.issuer_keys();
    let rec = build_transfer(
        TransferSource::Token(&token),
        &w.vendor_cert,
        &secret.token_priv,
        None,
        &issuer.identity,
        T0 + 10,
    )
    .unwrap();
    assert_eq!(rec.hop, 0);
    let s = verify_transfer_chain(&token, &[rec], &issuer, &[w.vendor_cert.clone()]);
    assert!(s.valid, "{s:?}");
    assert_eq!(s.final_holder, Some(w.vendor.public));
    assert_eq!(s.hops, 1);
}

#[test]
fn empty_chain_reports_no_transfer() {
    let mut w = world(false);
    let (token, _) = w.fx.token(100, w.relay_id);
    let s = verify_transfer_chain(&token, &[], &w.fx.issuer_keys(), &[]);
    assert!(!s.valid);
    assert_eq!(s.failure, Some(ChainFailure::NoTransfer));
}

#[test]
fn onward_transfer_rules() {
    let mut w = world(false);
    let issuer = w.fx.issuer_keys();
    let (token, secret) = w.fx.token(500, w.relay_id);
    let r0 = build_transfer(TransferSource::Token(&token), &w.vendor_cert, &secret.token_priv, None, &issuer.identity, T0 + 1)
        .unwrap();
    let err = build_transfer(
        TransferSource::Record(&r0),
        &w.supplier_cert,
        &w.vendor,
        Some(&w.vendor_cert),
        &issuer.identity,
        T0 + 2,
    )
    .unwrap_err();
    assert_eq!(err, TransferError::OnwardNotPermitted);

    // Signer must be the current holder.
    let err = build_transfer(
        TransferSource::Record(&r0),
        &w.supplier_cert,
        &w.supplier,
        Some(&w.supplier_cert),
        &issuer.identity,
        T0 + 2,
    )
    .unwrap_err();
    assert_eq!(err, TransferError::SignerMismatch);

    let mut w = world(true);
    let issuer = w.fx.issuer_keys();
    let (token, secret) = w.fx.token(500, w.relay_id);
    let r0 = build_transfer(TransferSource::Token(&token), &w.vendor_cert, &secret.token_priv, None, &issuer.identity, T0 + 1)
        .unwrap();
    let r1 = build_transfer(
        TransferSource::Record(&r0),
        &w.supplier_cert,
        &w.vendor,
        Some(&w.vendor_cert),
        &issuer.identity,
        T0 + 2,
    )
    .unwrap();
    assert_eq!(r1.hop, 1);
    let certs = [w.vendor_cert.clone(), w.supplier_cert.clone()];
    let s = verify_transfer_chain(&token, &[r0, r1], &issuer, &certs);
    assert!(s.valid);
    assert_eq!(s.final_holder, Some(w.supplier.public));
}

#[test]
fn chain_through_non_onward_vendor_rejected() {
    // Forge hop 1 by signing directly, bypassing build_transfer's check.
    let mut w = world(false);
    let issuer = w.fx.issuer_keys();
    let (token, secret) = w.fx.token(500, w.relay_id);
    let r0 = build_transfer(TransferSource::Token(&token), &w.vendor_cert, &secret.token_priv, None, &issuer.identity, T0 + 1)
        .unwrap();
    let r1 = TransferRecord::signed(token.token_pub, r0.digest(), w.supplier.public, 1, T0 + 2, &w.vendor);
    let certs = [w.vendor_cert.clone(), w.supplier_cert.clone()];
    let s = verify_transfer_chain(&token, &[r0, r1], &issuer, &certs);
    assert_eq!(s.failure, Some(ChainFailure::OnwardNotAllowed { hop: 0 }));
}

#[test]
fn expired_recipient_certificate() {
    let mut w = world(false);
    let issuer = w.fx.issuer_keys();
    let (token, secret) = w.fx.token(100, w.relay_id);
    let err = build_transfer(
        TransferSource::Token(&token),
        &w.vendor_cert,
        &secret.token_priv,
        None,
        &issuer.identity,
        T0 + DAY + 1,
    )
    .unwrap_err();
    assert_eq!(err, TransferError::CertificateNotCurrent(T0 + DAY + 1));
}

#[test]
fn certificate_checks() {
    let w = world(false);
    let issuer_pub = w.fx.issuer.public;
    assert!(verify_certificate(&w.vendor_cert, &issuer_pub, T0));
    assert!(verify_certificate(&w.vendor_cert, &issuer_pub, T0 + DAY));
    assert!(!verify_certificate(&w.vendor_cert, &issuer_pub, T0 + DAY + 1));
    let mut altered = w.vendor_cert.clone();
    altered.tax_category = "exempt".into();
    assert!(!verify_certificate(&altered, &issuer_pub, T0));
    let mut inverted = w.vendor_cert.body();
    inverted.valid_to = inverted.valid_from;
    assert!(!verify_certificate(&inverted.sign(&w.fx.issuer), &issuer_pub, T0));
}

/// Every single-field mutation of every record in a valid chain must fail.
#[test]
fn chain_soundness_under_field_mutation() {
    let mut w = world(true);
    let issuer = w.fx.issuer_keys();
    let (token, secret) = w.fx.token(2000, w.relay_id);
    let r0 = build_transfer(TransferSource::Token(&token), &w.vendor_cert, &secret.token_priv, None, &issuer.identity, T0 + 5)
        .unwrap();
    let r1 = build_transfer(TransferSource::Record(&r0), &w.supplier_cert, &w.vendor, Some(&w.vendor_cert), &issuer.identity, T0 + 6)
        .unwrap();
    let chain = vec![r0, r1];
    let certs = [w.vendor_cert.clone(), w.supplier_cert.clone()];
    assert!(verify_transfer_chain(&token, &chain, &issuer, &certs).valid);

    let other = w.fx.identity(KeyRole::Vendor).public;
    let mutations: Vec<Box<dyn Fn(&mut TransferRecord)>> = vec![
        Box::new(move |r| r.token_id = other),
        Box::new(|r| r.prev.0[0] ^= 1),
        Box::new(move |r| r.recipient_id = other),
        Box::new(|r| r.hop += 1),
        Box::new(|r| r.timestamp += 1),
        Box::new(|r| r.holder_sig.0[5] ^= 0x10),
    ];
    let mut checked = 0;
    for idx in 0..chain.len() {
        for mutate in &mutations {
            let mut bad = chain.clone();
            mutate(&mut bad[idx]);
            let s = verify_transfer_chain(&token, &bad, &issuer, &certs);
            assert!(!s.valid, "mutation survived at record {idx}: {s:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, 12);

    let mut bad_token = token.clone();
    bad_token.denomination = 5000;
    assert!(!verify_transfer_chain(&bad_token, &chain, &issuer, &certs).valid);
}

fn signed_checkpoint(keys: &[IdentityKeyPair], signers: usize, root: Digest) -> Checkpoint {
    let body = CheckpointBody { height: 0, root, prev_checkpoint: Digest::ZERO, leader: keys[0].public };
    let sigs = keys[..signers].iter().map(|k| body.sign(k)).collect();
    Checkpoint::new(body, sigs)
}

fn ledger(fx: &mut Fixture) -> (Vec<IdentityKeyPair>, LedgerConfig) {
    fx.ledger(4, 3)
}

fn records(w: &mut World, n: usize) -> Vec<TransferRecord> {
    let issuer = w.fx.issuer_keys();
    (0..n)
        .map(|i| {
            let (token, secret) = w.fx.token(100, w.relay_id);
            build_transfer(TransferSource::Token(&token), &w.vendor_cert, &secret.token_priv, None, &issuer.identity, T0 + i as u64)
                .unwrap()
        })
        .collect()
}

#[test]
fn single_leaf_proof() {
    let mut w = world(false);
    let (keys, config) = ledger(&mut w.fx);
    let rec = records(&mut w, 1).remove(0);
    let tree = MerkleTree::build(&[rec.digest()]).unwrap();
    let pop = ProofOfProvenance { record: rec, leaf_index: 0, path: vec![], checkpoint: signed_checkpoint(&keys, 3, tree.root()) };
    assert!(verify_pop(&pop, &config));
}

#[test]
fn proof_needs_quorum() {
    let mut w = world(false);
    let (keys, config) = ledger(&mut w.fx);
    let recs = records(&mut w, 2);
    let digests: Vec<_> = recs.iter().map(TransferRecord::digest).collect();
    let tree = MerkleTree::build(&digests).unwrap();
    let mk = |signers| ProofOfProvenance {
        record: recs[1].clone(),
        leaf_index: 1,
        path: tree.proof(1).unwrap(),
        checkpoint: signed_checkpoint(&keys, signers, tree.root()),
    };
    assert!(verify_pop(&mk(3), &config));
    assert!(!verify_pop(&mk(2), &config));
}

#[test]
fn eight_leaf_single_entry_corruptions() {
    let mut w = world(false);
    let (keys, config) = ledger(&mut w.fx);
    let recs = records(&mut w, 8);
    let digests: Vec<_> = recs.iter().map(TransferRecord::digest).collect();
    let tree = MerkleTree::build(&digests).unwrap();
    let cp = signed_checkpoint(&keys, 3, tree.root());
    for leaf in 0..8 {
        let pop = ProofOfProvenance {
            record: recs[leaf].clone(),
            leaf_index: leaf as u64,
            path: tree.proof(leaf).unwrap(),
            checkpoint: cp.clone(),
        };
        assert_eq!(pop.path.len(), 3);
        assert!(verify_pop(&pop, &config));
        for entry in 0..pop.path.len() {
            let mut swapped = pop.clone();
            swapped.path[entry].side = match swapped.path[entry].side {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
            };
            assert!(!verify_pop(&swapped, &config));
            for other in 0..8 {
                let mut replaced = pop.clone();
                replaced.path[entry].sibling = crate::merkle::leaf_hash(&digests[other]);
                if replaced.path[entry].sibling != pop.path[entry].sibling {
                    assert!(!verify_pop(&replaced, &config));
                }
            }
        }
        let mut wrong_record = pop.clone();
        wrong_record.record = recs[(leaf + 1) % 8].clone();
        assert!(!verify_pop(&wrong_record, &config));
    }
}

/// Serialized token-model structures carry no claimant identifier: the only
/// keys present are the ones enumerated here.
#[test]
fn schema_has_no_claimant_fields() {
    let mut w = world(false);
    let (keys, _) = ledger(&mut w.fx);
    let issuer = w.fx.issuer_keys();
    let (token, secret) = w.fx.token(100, w.relay_id);
    let rec = build_transfer(TransferSource::Token(&token), &w.vendor_cert, &secret.token_priv, None, &issuer.identity, T0)
        .unwrap();
    let pop = ProofOfProvenance {
        record: rec.clone(),
        leaf_index: 0,
        path: vec![],
        checkpoint: signed_checkpoint(&keys, 3, crate::merkle::leaf_hash(&rec.digest())),
    };

    fn keys_of(v: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
        match v {
            serde_json::Value::Object(m) => {
                for (k, v) in m {
                    let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    out.push(path.clone());
                    keys_of(v, &path, out);
                }
            }
            serde_json::Value::Array(a) => a.iter().for_each(|v| keys_of(v, &format!("{prefix}[]"), out)),
            _ => {}
        }
    }
    let mut found = Vec::new();
    keys_of(&serde_json::to_value(&token).unwrap(), "token", &mut found);
    keys_of(&serde_json::to_value(&rec).unwrap(), "record", &mut found);
    keys_of(&serde_json::to_value(&pop).unwrap(), "pop", &mut found);
    found.sort();
    found.dedup();
    let forbidden = ["claim", "claimant", "name", "identity", "owner", "account"];
    for key in &found {
        let leaf = key.rsplit('.').next().unwrap();
        assert!(!forbidden.iter().any(|f| leaf.contains(f)), "suspicious field {key}");
    }
    let token_fields: Vec<_> = found.iter().filter(|k| k.starts_with("token.")).cloned().collect();
    assert_eq!(
        token_fields,
        [
            "token.accreditation",
            "token.accreditation.denomination",
            "token.accreditation.signature",
            "token.denomination",
            "token.relay_id",
            "token.token_pub"
        ]
    );
    let record_fields: Vec<_> = found.iter().filter(|k| k.starts_with("record.")).cloned().collect();
    assert_eq!(
        record_fields,
        ["record.holder_sig", "record.hop", "record.prev", "record.recipient_id", "record.timestamp", "record.token_id"]
    );
}
