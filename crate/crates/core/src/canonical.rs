//! Canonical byte encoding shared by every signed or hashed structure.
//!
//! Structures serialize to JSON with lexicographically sorted object keys and
//! no insignificant whitespace. Big integers travel as lowercase hex strings,
//! byte fields as unpadded base64url. A [`Digest`] is SHA-256 over exactly
//! these bytes, so two peers that agree on a value agree on its digest.

use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// Encode `value` canonically.
///
/// Every type in this crate serializes to a JSON object tree with string keys,
/// so conversion cannot fail for them.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    // serde_json's default `Map` is a BTreeMap, which yields sorted keys.
    let tree = serde_json::to_value(value).expect("canonical value must be JSON-representable");
    serde_json::to_vec(&tree).expect("serializing a JSON tree cannot fail")
}

/// Canonical encoding as a `String`.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(to_canonical(value)).expect("JSON output is UTF-8")
}

/// Parse a value that was produced by [`to_canonical`] (any valid JSON is
/// accepted; canonical form is only required for hashing and signing).
pub fn from_canonical<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, serde_json::Error> {
    serde_json::from_slice(bytes)
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn b64_encode(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

pub fn b64_decode(text: &str) -> Result<Vec<u8>, base64::DecodeError> {
    URL_SAFE_NO_PAD.decode(text)
}

macro_rules! fixed_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn from_slice(bytes: &[u8]) -> Result<Self, $crate::canonical::LengthError> {
                let arr: [u8; $len] = bytes.try_into().map_err(|_| $crate::canonical::LengthError {
                    expected: $len,
                    actual: bytes.len(),
                })?;
                Ok(Self(arr))
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_b64(&self) -> String {
                $crate::canonical::b64_encode(&self.0)
            }

            pub fn from_b64(text: &str) -> Result<Self, $crate::canonical::LengthError> {
                let raw = $crate::canonical::b64_decode(text)
                    .map_err(|_| $crate::canonical::LengthError { expected: $len, actual: 0 })?;
                Self::from_slice(&raw)
            }
        }

        impl std::fmt::Debug for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}({})", stringify!($name), hex::encode(&self.0[..8]))
            }
        }

        impl std::str::FromStr for $name {
            type Err = $crate::canonical::LengthError;

            fn from_str(text: &str) -> Result<Self, Self::Err> {
                Self::from_b64(text)
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(&self.to_b64())
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_b64())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                Self::from_b64(&text).map_err(serde::de::Error::custom)
            }
        }
    };
}
pub(crate) use fixed_bytes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("expected {expected} bytes, got {actual}")]
pub struct LengthError {
    pub expected: usize,
    pub actual: usize,
}

fixed_bytes!(
    /// SHA-256 output.
    Digest,
    32
);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    /// Digest of the canonical encoding of `value`.
    pub fn of<T: Serialize + ?Sized>(value: &T) -> Digest {
        Digest(sha256(&to_canonical(value)))
    }

    pub fn of_bytes(bytes: &[u8]) -> Digest {
        Digest(sha256(bytes))
    }
}

/// Serde adapter for variable-length byte strings.
pub mod b64 {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&b64_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        b64_decode(&text).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for big integers as lowercase hex without prefix.
pub mod hex_biguint {
    use num_bigint::BigUint;
    use num_traits::Num;

    use super::*;

    pub fn serialize<S: Serializer>(value: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&value.to_str_radix(16))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        if text.is_empty() || text.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("big integers are lowercase hex"));
        }
        BigUint::from_str_radix(&text, 16).map_err(serde::de::Error::custom)
    }
}

impl fmt::LowerHex for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use num_bigint::BigUint;

    use super::*;

    #[derive(Serialize)]
    struct Sample {
        zeta: u32,
        alpha: &'static str,
        #[serde(with = "hex_biguint")]
        big: BigUint,
        #[serde(with = "b64")]
        raw: Vec<u8>,
    }

    #[test]
    fn keys_sorted_and_compact() {
        let s = Sample { zeta: 1, alpha: "x y", big: BigUint::from(0xABCDu32), raw: vec![0xfb, 0xff] };
        assert_eq!(to_canonical_string(&s), r#"{"alpha":"x y","big":"abcd","raw":"-_8","zeta":1}"#);
    }

    #[test]
    fn nested_maps_sorted_regardless_of_insertion_order() {
        let mut a = HashMap::new();
        for k in ["q", "b", "z", "a"] {
            a.insert(k, vec![k]);
        }
        assert_eq!(to_canonical_string(&a), r#"{"a":["a"],"b":["b"],"q":["q"],"z":["z"]}"#);
    }

    #[test]
    fn digest_roundtrips_through_b64() {
        let d = Digest::of_bytes(b"abc");
        let json = to_canonical_string(&d);
        let back: Digest = from_canonical(json.as_bytes()).unwrap();
        assert_eq!(back, d);
        assert!(Digest::from_b64("AAAA").is_err());
    }

    #[test]
    fn uppercase_hex_rejected() {
        #[derive(Deserialize)]
        struct W {
            #[serde(with = "hex_biguint")]
            #[allow(dead_code)]
            v: BigUint,
        }
        assert!(from_canonical::<W>(br#"{"v":"AB"}"#).is_err());
        assert!(from_canonical::<W>(br#"{"v":"ab"}"#).is_ok());
    }
}
