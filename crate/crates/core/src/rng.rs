//! Seeded random streams.
//!
//! Every source of randomness in the pipeline is derived from one 64-bit seed.
//! Each consumer gets its own ChaCha8 stream (same key, distinct stream id) so
//! that, for example, changing the number of dropout draws never perturbs the
//! parameter initialization or the data split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Named sub-streams of the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Parameter initialization (stream id 1).
    Init,
    /// Dropout masks during training (stream id 2).
    Dropout,
    /// Per-epoch minibatch shuffling (stream id 3).
    Shuffle,
    /// Train/test split shuffling (stream id 4).
    Split,
    /// Optional holdout carve-out from the training split (stream id 5).
    Holdout,
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Dropout => 2,
            Stream::Shuffle => 3,
            Stream::Split => 4,
            Stream::Holdout => 5,
        }
    }
}

/// Returns the generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
