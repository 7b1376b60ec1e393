//! Seed derivation helpers.
//!
//! Every random draw in a run comes from a `ChaCha8Rng` seeded by mixing the run
//! seed with a stream label and indices, so any step can be replayed from
//! `(seed, iteration)` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine two words into one well-mixed seed. Not commutative.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix(splitmix(a) ^ b.rotate_left(17))
}

/// FNV-1a over UTF-8 bytes. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for byte in s.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Named sub-streams of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split,
    InitialPair,
    References,
    Train,
    Select,
    SmallPool,
    Synth,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Split => 0x5350_4c49,
            Stream::InitialPair => 0x494e_4954,
            Stream::References => 0x5245_4653,
            Stream::Train => 0x5452_4149,
            Stream::Select => 0x5345_4c45,
            Stream::SmallPool => 0x504f_4f4c,
            Stream::Synth => 0x5359_4e54,
        }
    }
}

pub fn derive(seed: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(seed, stream.tag()), index)
}

pub fn rng_for(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}
