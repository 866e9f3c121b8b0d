//! Named, counter-indexed RNG sub-streams.
//!
//! Every random quantity is drawn from a stream identified by
//! `(master seed, label, index)`, so replicates, chains and bootstrap weights
//! are reproducible independently of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derive the seed of sub-stream `label[index]` from a master seed.
pub fn substream_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(label)).wrapping_add(splitmix64(index)))
}

pub fn substream(master: u64, label: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(substream_seed(master, label, index))
}
