//! Counter-based seed derivation.
//!
//! A master seed is split into independent streams. Each consumer asks for
//! `(stream, counter)` and gets a seed that depends on nothing else, so adding
//! a new consumer never shifts the values another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    InitialInput = 1,
    PlantNoise = 2,
    GpStarts = 3,
    Reseed = 4,
    Repeatability = 5,
    Reference = 6,
    Probe = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, counter: u64) -> u64 {
    let s = splitmix64(master ^ splitmix64(stream as u64));
    splitmix64(s ^ splitmix64(counter.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Deterministic generator used everywhere a seed is consumed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
