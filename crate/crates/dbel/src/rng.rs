//! Deterministic stream derivation for Monte Carlo work.
//!
//! Every replicate draws from its own counter-addressed stream so results do
//! not depend on worker count or scheduling: stream `(seed, replicate, arm)`
//! is fully determined by its key. ChaCha8 exposes 2^64 independent streams
//! per seed, which we split as `replicate * 2 + arm`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ARM_X: u64 = 0;
pub const ARM_Y: u64 = 1;

/// Stream for one (replicate, arm) pair.
pub fn arm_rng(seed: u64, replicate: u64, arm: u64) -> ChaCha8Rng {
    debug_assert!(arm < 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate.wrapping_mul(2).wrapping_add(arm));
    rng
}

/// Stream keyed by an arbitrary index, for work that is not arm-shaped
/// (multistart searches, subsampling).
pub fn indexed_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
