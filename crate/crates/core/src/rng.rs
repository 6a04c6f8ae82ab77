//! Seedable, splittable random streams.
//!
//! Every source of randomness in the library hangs off a single `u64` root
//! seed. Consumers never share a generator; instead they derive named child
//! streams (`seed.child("population")`, `seed.child_index("rep", 17)`), so
//! adding a new consumer cannot perturb the draws seen by existing ones and
//! replication loops can be parallelized without coordination.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A point in the stream-derivation tree. Copyable, cheap, immutable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed(u64);

impl StreamSeed {
    pub fn new(seed: u64) -> Self {
        StreamSeed(seed)
    }

    pub fn seed(&self) -> u64 {
        self.0
    }

    /// Derive a child stream by label.
    pub fn child(&self, label: &str) -> StreamSeed {
        let mut h = self.0 ^ 0x9e37_79b9_7f4a_7c15;
        for &b in label.as_bytes() {
            h = mix(h ^ u64::from(b));
        }
        StreamSeed(mix(h))
    }

    /// Derive an indexed child stream, e.g. one per replication.
    pub fn child_index(&self, label: &str, index: u64) -> StreamSeed {
        StreamSeed(mix(self.child(label).0 ^ mix(index)))
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

// SplitMix64 finalizer; full-period bijection on u64.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
