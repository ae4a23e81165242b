use num_bigint::BigUint;
use sha2::{Digest, Sha256};

/// Full-domain hash of `message` into `[0, modulus)`.
///
/// Attempt `a` expands the message with counter-mode SHA-256,
/// `block_i = SHA-256(message || be32(a) || be32(i))`, keeps the first
/// `byte_len(modulus)` bytes big-endian, clears the bits above
/// `bit_len(modulus)` and accepts the candidate if it is below the modulus.
/// Otherwise the next attempt is tried, so the output is uniform.
pub fn fdh_hash(message: &[u8], modulus: &BigUint) -> BigUint {
    let bits = modulus.bits() as usize;
    assert!(bits >= 2, "modulus must be at least 2");
    let byte_len = bits.div_ceil(8);
    let excess = byte_len * 8 - bits;
    let blocks = byte_len.div_ceil(32);

    let mut attempt: u32 = 0;
    loop {
        let mut stream = Vec::with_capacity(blocks * 32);
        for block in 0..blocks as u32 {
            let mut h = Sha256::new();
            h.update(message);
            h.update(attempt.to_be_bytes());
            h.update(block.to_be_bytes());
            stream.extend_from_slice(&h.finalize());
        }
        stream.truncate(byte_len);
        stream[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&stream);
        if &candidate < modulus {
            return candidate;
        }
        attempt = attempt.checked_add(1).expect("rejection sampling cannot exhaust 2^32 attempts");
    }
}

#[cfg(test)]
mod tests {
    use num_traits::One;

    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let n = BigUint::from(55u32);
        for i in 0..200u32 {
            let m = i.to_le_bytes();
            let h = fdh_hash(&m, &n);
            assert!(h < n);
            assert_eq!(h, fdh_hash(&m, &n));
        }
    }

    #[test]
    fn full_width_modulus_takes_first_block() {
        // Any 256-bit modulus above the first block leaves it untouched.
        let n = (BigUint::one() << 256u32) - BigUint::one();
        let mut h = Sha256::new();
        h.update([0u8; 8]);
        let first = BigUint::from_bytes_be(&h.finalize());
        assert_eq!(fdh_hash(b"", &n), first);
    }
}
