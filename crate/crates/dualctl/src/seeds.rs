//! Counter-based seed derivation.
//!
//! Every random stream is keyed by the master seed plus a path of integers
//! (for example `[stage, alpha_index, trial]`). Keys are mixed with SplitMix64,
//! so trials can be reproduced independently of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a master seed and a key path.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(master), |acc, &k| splitmix(acc ^ splitmix(k)))
}

/// Seeded generator used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stage tags used as the first element of key paths.
pub mod stage {
    pub const PRIOR_CENTER: u64 = 1;
    pub const SCENARIO_PRIOR: u64 = 2;
    pub const SCENARIO_NOISE: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const RANDOM_INPUT: u64 = 5;
    pub const VALIDATION: u64 = 6;
    pub const HOLDOUT: u64 = 7;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_stable_and_path_sensitive() {
        assert_eq!(derive(7, &[1, 2]), derive(7, &[1, 2]));
        assert_ne!(derive(7, &[1, 2]), derive(7, &[2, 1]));
        assert_ne!(derive(7, &[1]), derive(8, &[1]));
    }
}
