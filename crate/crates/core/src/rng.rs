//! Deterministic generator streams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] whose
//! key and stream number are derived from a master seed and a list of
//! integer tags (experiment component, replicate index, series term, ...).
//! The derivation is a pure function, so results never depend on thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a sequence of tags into a new 64-bit key.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// Generator keyed by `seed` and positioned on stream `stream`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Generator for a tagged component of a run: key from `mix(seed, tags)`,
/// stream 0.
pub fn derive(seed: u64, tags: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tags))
}
