//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed and told
//! apart by a 64-bit stream id, so results never depend on which thread
//! consumed which stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream lanes of one backtest replicate.
pub const LANE_TRIANGLE: u8 = 0;
pub const LANE_TRUE_DIAGONAL: u8 = 1;
/// Method `m` uses lane `LANE_METHOD_BASE + m`.
pub const LANE_METHOD_BASE: u8 = 2;

pub fn stream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream id for replicate `j`, redraw attempt `attempt` and lane `lane`.
pub fn replicate_stream_id(j: u64, attempt: u8, lane: u8) -> u64 {
    debug_assert!(j < 1 << 48);
    (((j << 8) | attempt as u64) << 8) | lane as u64
}

pub fn replicate_stream(seed: u64, j: u64, attempt: u8, lane: u8) -> Stream {
    stream(seed, replicate_stream_id(j, attempt, lane))
}
