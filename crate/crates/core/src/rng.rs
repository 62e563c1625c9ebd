//! Deterministic random streams.
//!
//! Every run draws from ChaCha8, a counter-based generator whose output is
//! fully determined by `(seed, stream)`. Noise and delay sampling use separate
//! streams so that changing the delay schedule never perturbs the noise draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Identifier written into every run record.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9";

pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The two independent streams owned by one run.
#[derive(Clone, Debug)]
pub struct RunStreams {
    pub noise: SeededRng,
    pub delay: SeededRng,
}

impl RunStreams {
    pub fn new(seed: u64, run_index: u64) -> Self {
        Self {
            noise: stream(seed, run_index << 1),
            delay: stream(seed, (run_index << 1) | 1),
        }
    }
}
