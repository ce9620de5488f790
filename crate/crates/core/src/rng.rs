//! Deterministic random substreams.
//!
//! Every random draw in an experiment comes from a ChaCha8 generator keyed by
//! the master seed, with a 64-bit stream id selecting an independent stream:
//!
//! ```text
//!   bits 56..64  combination index (0..=8, in the order dNdN, dNdX, ... dYdY)
//!   bits 24..56  observed-record (run) index
//!   bits  0..24  slot: 0 = true/observed record generation, 1 + i = candidate i
//! ```
//!
//! Any single run, or any single candidate of a run, can therefore be
//! regenerated in isolation, and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const MAX_CANDIDATES: usize = (1 << 24) - 1;

pub fn stream_id(combination: usize, run: usize, slot: usize) -> u64 {
    assert!(combination < 256, "combination index out of range");
    assert!(run < (1 << 32), "run index out of range");
    assert!(slot < (1 << 24), "slot index out of range");
    ((combination as u64) << 56) | ((run as u64) << 24) | slot as u64
}

pub fn substream(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

pub fn record_stream(master_seed: u64, combination: usize, run: usize) -> ChaCha8Rng {
    substream(master_seed, stream_id(combination, run, 0))
}

pub fn candidate_stream(master_seed: u64, combination: usize, run: usize, candidate: usize) -> ChaCha8Rng {
    substream(master_seed, stream_id(combination, run, candidate + 1))
}
