//! Reproducible random streams.
//!
//! Replica `k` of a computation seeded with `seed` always draws from the same
//! ChaCha stream, whatever the thread schedule. Independent parts of one
//! computation (for example numerator and denominator of a ratio) use
//! distinct domain tags.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod domain {
    pub const FBM: u64 = 0x6662_6d00;
    pub const RATIO_NUMERATOR: u64 = 0x7261_7469_6f6e;
    pub const RATIO_DENOMINATOR: u64 = 0x7261_7469_6f64;
    pub const SMALL_BALL: u64 = 0x736d_616c_6c62;
    pub const BUNDLE: u64 = 0x6275_6e64_6c65;
    pub const LAW: u64 = 0x6c61_7700;
    pub const PROBE: u64 = 0x7072_6f62_6500;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for a `(seed, domain)` pair.
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    splitmix64(seed ^ splitmix64(domain))
}

/// RNG for replica `index` of the computation seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
