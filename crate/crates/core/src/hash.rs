//! Stateless hashes shared by the mock models, the tokenizer digests and the
//! seed-derivation code. Both are fixed bit-for-bit so mock runs reproduce
//! across platforms.

use sha2::{Digest, Sha256};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finalizer (Steele, Lea & Flood), applied to `x + golden`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps a 64-bit hash to `[0, 1)` as `h / 2^64`, truncated to the 53 bits an
/// `f64` mantissa holds (so the result never rounds up to 1.0).
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Incremental FNV-1a over token ids, each fed as four little-endian bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContextDigest(u64);

impl ContextDigest {
    pub fn empty() -> Self {
        Self(FNV_OFFSET)
    }

    pub fn of(tokens: &[u32]) -> Self {
        let mut d = Self::empty();
        for &t in tokens {
            d.push(t);
        }
        d
    }

    pub fn push(&mut self, token: u32) {
        for b in token.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

/// Hex SHA-256 of raw bytes, used for file digests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"rankmark-seed-v1");
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference SplitMix64 generator seeded with 0:
        // state advances by the golden gamma before mixing.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(
            splitmix64(0x9e37_79b9_7f4a_7c15),
            0x6e78_9e6a_a1b9_65f4
        );
    }

    #[test]
    fn digest_is_incremental() {
        let mut d = ContextDigest::empty();
        d.push(7);
        d.push(1 << 20);
        assert_eq!(d, ContextDigest::of(&[7, 1 << 20]));
        assert_ne!(d, ContextDigest::of(&[1 << 20, 7]));
    }

    #[test]
    fn unit_interval_bounds() {
        assert_eq!(unit_interval(0), 0.0);
        assert!(unit_interval(u64::MAX) < 1.0);
        assert!(unit_interval(u64::MAX >> 1) < 0.5000001);
    }
}
