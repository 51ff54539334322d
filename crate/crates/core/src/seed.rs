//! Seed derivation.
//!
//! Every random stream in the pipeline is derived from the run's master seed
//! and a path of integers (sample index, attempt, stage), so output never
//! depends on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `master` with each element of `path` in order.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(master: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, path))
}

/// Stream tags keep per-sample streams for different stages apart.
pub mod stage {
    pub const STRUCTURE: u64 = 1;
    pub const TEMPLATE: u64 = 2;
    pub const REFINE: u64 = 3;
    pub const FEW_SHOT: u64 = 4;
    pub const PROBE: u64 = 5;
}

/// Identifies the random stream owned by one corpus sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSeed {
    pub master: u64,
    pub index: u64,
}

impl SampleSeed {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }

    /// Seed for the `attempt`-th structure resampling attempt.
    pub fn attempt_rng(&self, attempt: u32) -> Rng {
        rng_from(self.master, &[stage::STRUCTURE, self.index, attempt as u64])
    }

    pub fn stage_rng(&self, stage: u64, salt: u64) -> Rng {
        rng_from(self.master, &[stage, self.index, salt])
    }
}
