//! Seed derivation and the deterministic generator used everywhere.
//!
//! Child seeds are a SplitMix64-style hash of `(parent, tag, index)`, so a
//! campaign record can be regenerated from the master seed alone.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// `split(seed, tag, index)`: each component goes through the finalizer in turn.
pub const fn split(seed: u64, tag: u64, index: u64) -> u64 {
    let a = mix64(seed.wrapping_add(GOLDEN_GAMMA));
    let b = mix64(a ^ tag.wrapping_mul(GOLDEN_GAMMA));
    mix64(b ^ index.wrapping_add(GOLDEN_GAMMA).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform integer in `[0, bound)` by rejection (no modulo bias).
pub fn below(rng: &mut impl RngCore, bound: u64) -> u64 {
    assert!(bound > 0);
    let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
    loop {
        let x = rng.next_u64();
        if x <= zone {
            return x % bound;
        }
    }
}

/// Uniform `f32` in `[0, 1)` with 24 random bits.
pub fn unit_f32(rng: &mut impl RngCore) -> f32 {
    (rng.next_u32() >> 8) as f32 * (1.0 / 16_777_216.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_sensitive_to_every_component() {
        let base = split(1, 2, 3);
        assert_ne!(base, split(0, 2, 3));
        assert_ne!(base, split(1, 3, 3));
        assert_ne!(base, split(1, 2, 4));
        assert_eq!(base, split(1, 2, 3));
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = rng_from_seed(9);
        for bound in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..100 {
                assert!(below(&mut rng, bound) < bound);
            }
        }
    }
}
