//! Counter-derived random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by a master
//! seed and one or more counters, so results never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a counter into a seed.
#[inline]
pub fn derive_seed(seed: u64, counter: u64) -> u64 {
    splitmix64(seed ^ splitmix64(counter.wrapping_mul(GOLDEN).wrapping_add(1)))
}

pub fn stream(seed: u64, counter: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, counter))
}

pub fn stream2(seed: u64, a: u64, b: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(derive_seed(seed, a), b))
}
