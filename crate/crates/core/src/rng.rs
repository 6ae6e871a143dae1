//! Deterministic random substreams.
//!
//! Every consumer of randomness draws from its own ChaCha stream keyed by
//! `(seed, stream id)`, so adding or removing draws in one place never shifts
//! the numbers seen anywhere else.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purposes used to partition the stream id space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Update = 0,
    Measure = 1,
    Communicate = 2,
    Delay = 3,
    TemporalSamples = 4,
    ErrorBoundSamples = 5,
    Problem = 6,
    Init = 7,
}

const PURPOSES: u64 = 16;

pub fn substream(seed: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index * PURPOSES + purpose as u64);
    rng
}
