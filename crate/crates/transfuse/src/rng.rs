//! Deterministic seed derivation.
//!
//! Every parallel unit of work (tree, fold, replicate, grid point) receives a
//! seed derived from the user seed and its own index, so results never depend
//! on scheduling order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from `(base, index)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(0x51_7C_C1_B7_27_22_0A_95)))
}

/// Standard RNG used throughout the crate, seeded from a derived seed.
pub fn make_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
