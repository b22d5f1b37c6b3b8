//! Keyed random streams.
//!
//! Every random draw in the simulator comes from a ChaCha stream addressed by
//! `(seed, purpose, entity, round)`. Two runs that evaluate clients in a
//! different order, or in parallel, still see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Address of one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    purpose: u64,
    entity: u64,
    round: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: &str) -> Self {
        Self {
            seed,
            purpose: fnv1a(purpose.as_bytes()),
            entity: 0,
            round: 0,
        }
    }

    /// Node id, head index or any other owner of the stream.
    pub fn entity(mut self, entity: u64) -> Self {
        self.entity = entity;
        self
    }

    pub fn round(mut self, round: u32) -> Self {
        self.round = u64::from(round);
        self
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(self.seed ^ splitmix(self.purpose)));
        rng.set_stream(splitmix(self.entity.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ splitmix(self.round)));
        rng
    }
}

/// Seed and round of one training step; hands out the per-purpose streams
/// the forward pass draws dropout masks from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundStreams {
    pub seed: u64,
    pub round: u32,
}

impl RoundStreams {
    pub fn new(seed: u64, round: u32) -> Self {
        Self { seed, round }
    }

    pub fn rng(&self, purpose: &str, entity: u64) -> ChaCha8Rng {
        StreamKey::new(self.seed, purpose)
            .entity(entity)
            .round(self.round)
            .rng()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
