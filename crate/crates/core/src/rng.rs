//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`stream`], so a single
//! master seed fixes all sampling, initialization and corruption.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name of the pinned generator, echoed into run manifests.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9";

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `seed` and a stream counter.
pub fn derive_seed(seed: u64, counter: u64) -> u64 {
    splitmix64(seed ^ splitmix64(counter.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn stream(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
