//! Counter-keyed random streams.
//!
//! Every stochastic draw in the crate comes from a generator keyed by the run
//! seed plus a small tuple of indices, so serial and parallel evaluation of
//! members and lead times consume identical streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags that separate independent uses of the same (seed, indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    CascadeNoise = 1,
    FlowPerturbation = 2,
    RankTies = 3,
    Synthetic = 4,
    HyperSearch = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed, a stream tag and indices into one 64-bit key.
pub fn derive_key(seed: u64, stream: Stream, indices: &[u64]) -> u64 {
    let mut key = splitmix64(seed ^ splitmix64(stream as u64));
    for &i in indices {
        key = splitmix64(key ^ splitmix64(i.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    key
}

pub fn keyed_rng(seed: u64, stream: Stream, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, stream, indices))
}
