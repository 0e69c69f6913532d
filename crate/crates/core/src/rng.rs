//! Counter-based generator derivation.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the master seed.
//! The 64-bit stream id packs `(purpose, replicate, cell)` so that each
//! (replicate, cell, purpose) triple owns a disjoint stream independent of
//! scheduling:
//!
//! ```text
//! stream = purpose << 60 | (replicate mod 2^36) << 24 | (cell mod 2^24)
//! ```

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Drawing the study sample of one replicate.
    Sample = 1,
    /// Seeding the reserve simulation of one study cell.
    Reserve = 2,
    /// Seeding the ground-truth reserve simulation.
    Truth = 3,
}

pub fn stream_id(purpose: Purpose, replicate: u64, cell: u64) -> u64 {
    (purpose as u64) << 60 | (replicate & ((1 << 36) - 1)) << 24 | (cell & ((1 << 24) - 1))
}

/// Generator for one `(purpose, replicate, cell)` substream of `master`.
pub fn substream(master: u64, purpose: Purpose, replicate: u64, cell: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id(purpose, replicate, cell));
    rng
}

/// A derived 64-bit seed, for handing to APIs that take a seed rather than a generator.
pub fn derive_seed(master: u64, purpose: Purpose, replicate: u64, cell: u64) -> u64 {
    substream(master, purpose, replicate, cell).next_u64()
}

/// Generator for partition `index` of a simulation seeded with `seed`.
pub fn partition(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A seed from operating-system entropy.
pub fn entropy_seed() -> u64 {
    rand::rng().next_u64()
}
