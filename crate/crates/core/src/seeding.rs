//! Per-work-unit random streams.
//!
//! Every random draw is keyed by `(seed, stream, trial, point)` so that trials
//! can run in any order or on any worker and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Channel = 1,
    ProposedNoise = 2,
    BenchmarkNoise = 3,
    Validation = 4,
}

pub fn stream_rng(seed: u64, stream: Stream, trial: u64, point: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    key[16..24].copy_from_slice(&trial.to_le_bytes());
    key[24..].copy_from_slice(&point.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
