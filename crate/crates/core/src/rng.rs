//! Seeded random streams.
//!
//! Every randomized routine takes a `u64` seed and derives independent
//! substreams from it by hashing a path of integers, e.g. `(seed, phase, index)`.
//! Derivation is a chain of SplitMix64 finalizers, so the stream for a given
//! path never depends on scheduling or on how many other streams were created.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Stream = ChaCha12Rng;

/// Phase tags used when deriving substreams from a study seed.
pub mod phase {
    pub const DESIGN: u64 = 0x4445_5349;
    pub const DESIGN_INIT: u64 = 1;
    pub const DESIGN_ROUND: u64 = 2;
    pub const DESIGN_POINTS: u64 = 3;
    pub const SIMULATE: u64 = 0x5349_4d55;
    pub const FIT: u64 = 0x4649_5420;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
    pub const POSTERIOR: u64 = 0x504f_5354;
    pub const SHAPLEY: u64 = 0x5348_4150;
    pub const DATA: u64 = 0x4441_5441;
    pub const MACRO: u64 = 0x4d41_4352;
    pub const REPLICATION: u64 = 0x5245_504c;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and an index path.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> Stream {
    Stream::seed_from_u64(derive(seed, path))
}
