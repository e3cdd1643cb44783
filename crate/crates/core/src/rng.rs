//! Seeded random number generation.
//!
//! Every stochastic routine takes an explicit `u64` seed and builds a
//! [`ChaCha8Rng`] from it. Independent streams (replications, folds) derive
//! their seeds with [`derive_seed`] so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type XperRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> XperRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 mix of `(base, stream)`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_streams_differ_and_repeat() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
        let a: u64 = seeded(11).random();
        let b: u64 = seeded(11).random();
        assert_eq!(a, b);
    }
}
