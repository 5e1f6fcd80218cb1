//! Counter-based random streams.
//!
//! Every trajectory, bootstrap replicate or Monte-Carlo batch draws from its
//! own ChaCha8 stream identified by `(seed, stream_index)`. ChaCha is a
//! counter-mode generator, so streams are independent and reproducible
//! regardless of how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed for a named sub-experiment so that unrelated
/// experiments sharing a base seed do not share streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
