//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`) seeded
//! with `seed_from_u64(seed)`. Independent runs derived from one seed (for
//! example multistart restarts) use the same key with distinct ChaCha stream
//! ids, so the streams do not overlap and results do not depend on thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SqRng = ChaCha8Rng;

/// Generator for `seed`, stream 0.
pub fn seeded(seed: u64) -> SqRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on ChaCha stream `stream`. Stream 0 equals [`seeded`].
pub fn seeded_stream(seed: u64, stream: u64) -> SqRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
