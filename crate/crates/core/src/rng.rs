//! Seeding for reproducible simulation runs.
//!
//! Every run owns one ChaCha8 stream whose seed is a pure function of
//! `(master_seed, run_index)`, so execution order never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by every simulation run.
pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run_index` under `master_seed`.
pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(run_index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn run_rng(master_seed: u64, run_index: u64) -> SimRng {
    rng_from_seed(run_seed(master_seed, run_index))
}
