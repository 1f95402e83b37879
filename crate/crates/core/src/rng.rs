//! Seeded random streams.
//!
//! Every random decision is drawn from a ChaCha8 stream keyed by a seed and a
//! stream number, so results do not depend on platform or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_HOLDOUT: u64 = 1;
pub const STREAM_SELECTION: u64 = 2;
pub const STREAM_NOISE: u64 = 3;
pub const STREAM_POOL: u64 = 4;
/// Monte-Carlo trials use `STREAM_TRIALS + trial`.
pub const STREAM_TRIALS: u64 = 1 << 32;

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
