//! Counter-based random streams.
//!
//! A run owns one [`Streams`] built from its seed; each consumer asks for the
//! stream of a `(round, lane)` pair. Lane [`Lane::Cohort`] feeds the cohort
//! draw, lane [`Lane::Client`] feeds client `m`'s compressor. Streams never
//! overlap, so the order in which clients are processed cannot change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Cohort,
    Client(usize),
}

impl Lane {
    fn id(self) -> u64 {
        match self {
            Lane::Cohort => 0,
            Lane::Client(m) => m as u64 + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, round: u64, lane: Lane) -> StreamRng {
        assert!(round < (1 << 32) && lane.id() < (1 << 32));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((round << 32) | lane.id());
        rng
    }
}

/// Generic seeded generator for data synthesis and test fixtures.
pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
