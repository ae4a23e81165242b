//! Full-domain-hash outputs checked against independently computed vectors.

use eft_core::crypto::fdh_hash;
use num_bigint::BigUint;
use serde::Deserialize;

#[derive(Deserialize)]
struct Vector {
    message_hex: String,
    modulus_hex: String,
    expected_hex: String,
    attempts: u32,
}

#[derive(Deserialize)]
struct Vectors {
    vectors: Vec<Vector>,
}

fn big(hex: &str) -> BigUint {
    BigUint::parse_bytes(hex.as_bytes(), 16).expect("hex")
}

#[test]
fn fdh_matches_reference_vectors() {
    let file: Vectors = serde_json::from_str(include_str!("testdata/fdh_vectors.json")).unwrap();
    assert!(file.vectors.len() >= 20);
    assert!(file.vectors.iter().any(|v| v.attempts > 1), "no vector exercises rejection sampling");
    for (i, v) in file.vectors.iter().enumerate() {
        let message = hex::decode(&v.message_hex).unwrap();
        let n = big(&v.modulus_hex);
        let got = fdh_hash(&message, &n);
        assert_eq!(got, big(&v.expected_hex), "vector {i} ({} bits)", n.bits());
        assert!(got < n);
    }
}
