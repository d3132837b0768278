//! Seeded random streams.
//!
//! Every run derives its randomness from one seed. Each stage (data, init,
//! shuffle, ...) draws from its own named ChaCha stream, so changing how much
//! one stage consumes never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

// FNV-1a; only needs to be stable across platforms and releases.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// A generator for substream `name` of `seed`.
pub fn substream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}

/// A generator for substream `name` of `seed`, positioned at record `index`
/// where each record consumes `words` 32-bit words. Gives random access into
/// a stream without materializing it.
pub fn substream_at(seed: u64, name: &str, index: u64, words: u64) -> StreamRng {
    let mut rng = substream(seed, name);
    rng.set_word_pos(u128::from(index) * u128::from(words));
    rng
}
