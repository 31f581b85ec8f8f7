//! Stable derivation of independent RNG streams from structured keys.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed.
#[derive(Debug, Clone, Copy)]
pub struct SeedKey(u64);

impl SeedKey {
    pub fn new(root: u64) -> Self {
        SeedKey(mix(root))
    }

    pub fn with(self, word: u64) -> Self {
        SeedKey(mix(self.0.rotate_left(23).wrapping_add(0x632B_E59B_D9B4_E019) ^ mix(word)))
    }

    pub fn with_f64(self, value: f64) -> Self {
        self.with(value.to_bits())
    }

    pub fn with_str(self, s: &str) -> Self {
        let mut key = self.with(s.len() as u64);
        for chunk in s.as_bytes().chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            key = key.with(u64::from_le_bytes(word));
        }
        key
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

// stream domains
pub(crate) const SCENE: u64 = 1;
pub(crate) const VALIDATION: u64 = 2;
pub(crate) const NOISE: u64 = 3;
pub(crate) const INIT: u64 = 4;
pub(crate) const SHUFFLE: u64 = 5;
