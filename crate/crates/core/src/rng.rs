//! Seeded random streams.
//!
//! Every chain or replication draws from its own ChaCha8 stream: the 64-bit
//! seed picks the key and a 64-bit stream id picks one of `2^64` independent
//! sequences under that key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a replication-level key into a stream id. `outer < 2^24`,
/// `index < 2^32`, `purpose < 2^8`; distinct inputs give distinct ids.
pub fn stream_id(outer: u64, index: u64, purpose: u8) -> u64 {
    debug_assert!(outer < (1 << 24) && index < (1 << 32));
    (outer << 40) | (index << 8) | u64::from(purpose)
}
