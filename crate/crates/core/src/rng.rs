//! Seeded random streams.
//!
//! Every random quantity in the toolkit is drawn from ChaCha20 (the
//! `rand_chacha` implementation), keyed by a 64-bit seed and a 64-bit stream
//! id. Streams with distinct ids are independent, so parallel work units
//! (chains, bootstrap replicates, posterior draws) stay reproducible no matter
//! how they are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids for the distinct consumers of one seed.
pub mod streams {
    pub const DESIGN_VALUES: u64 = 0;
    pub const DESIGN_SHUFFLE: u64 = 1;
    pub const SIMULATION: u64 = 2;
    /// Per-chain, per-replicate and per-draw streams start here.
    pub const INDEXED_BASE: u64 = 1 << 32;
}

pub fn indexed_rng(seed: u64, index: u64) -> StreamRng {
    stream_rng(seed, streams::INDEXED_BASE + index)
}
