//! Deterministic random-number streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose seed is a pure
//! function of the run seed and a path of integer tags, for instance
//! `(replicate, step, outer particle)`. Results therefore do not depend on how
//! work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Position in the tree of random streams derived from a run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

/// Well-known tags for the top level of the stream tree.
pub mod tags {
    pub const DATA: u64 = 0x0da7a;
    pub const FILTER: u64 = 0xf117e2;
    pub const REPLICATE: u64 = 0x2e911ca7e;
    pub const CHAIN: u64 = 0xc4a19;
    pub const INIT: u64 = 0x1417;
    pub const STEP: u64 = 0x57e9;
    pub const OUTER_RESAMPLE: u64 = 0x0e7e2;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(splitmix64(seed))
    }

    /// Derives the key of a child stream. Distinct tags give unrelated keys.
    pub fn child(self, tag: u64) -> Self {
        StreamKey(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x6a09_e667_f3bc_c909))))
    }

    pub fn path(self, tags: &[u64]) -> Self {
        tags.iter().fold(self, |k, &t| k.child(t))
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}
