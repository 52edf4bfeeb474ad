//! Replayable random streams.
//!
//! Every stream is a ChaCha8 generator seeded from
//! `splitmix64(seed ⊕ splitmix64(purpose ⊕ splitmix64(index)))`, so a draw is a
//! pure function of `(seed, purpose, index)` and never of scheduling order.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Design = 1,
    Noise = 2,
    Point = 3,
    Subsample = 4,
    BandNoise = 5,
    Split = 6,
    Fold = 7,
    Response = 8,
}

/// The SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(purpose as u64 ^ splitmix64(index)))
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose, index))
}
