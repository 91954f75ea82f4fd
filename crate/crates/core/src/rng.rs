//! Reproducible random streams.
//!
//! Every stochastic component draws from a [`RngStream`] keyed by a
//! `(seed, stream_id)` pair. The generator is ChaCha8 (`rand_chacha`), seeded
//! with `seed_from_u64(seed)` and positioned on 64-bit stream `stream_id`, so
//! concurrent trajectories get disjoint sequences without any coordination.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Name of the generator, recorded in run provenance.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9): seed_from_u64(seed), set_stream(stream_id)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPair {
    pub seed: u64,
    pub stream_id: u64,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    id: SeedPair,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            id: SeedPair { seed, stream_id },
            rng,
        }
    }

    /// Stream for trajectory `index` of an ensemble driven by `master_seed`.
    pub fn for_trajectory(master_seed: u64, index: u64) -> Self {
        Self::new(master_seed, index)
    }

    pub fn id(&self) -> SeedPair {
        self.id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
