//! Counter-based random streams.
//!
//! Every `(seed, step, stream)` triple addresses its own block range of a
//! ChaCha8 keystream, so workers can draw independently without sharing
//! state and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per `(step, stream)` slot.
const WORDS_PER_STEP: u128 = 1 << 40;

pub fn stream_rng(seed: u64, step: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    rng
}

/// Stream indices reserved for non-cell consumers.
pub mod streams {
    pub const INIT: u64 = u64::MAX;
    pub const INIT_VELOCITIES: u64 = u64::MAX - 1;
}
