//! Seeding conventions.
//!
//! All randomness goes through ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded
//! from a 64-bit integer. Per-trial seeds in the experiment harness are
//! derived with [`derive_seed`], a SplitMix64 fold over the master seed and
//! the cell coordinates. Both are stable across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TtRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> TtRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `h₀ = splitmix(master)`, `h_{j+1} = splitmix(h_j ⊕ part_j)`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |h, &p| splitmix64(h ^ p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable() {
        // Frozen values: changing them changes every experiment seed.
        assert_eq!(derive_seed(0, &[]), 0xE220_A839_7B1D_CDAF);
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
    }
}
