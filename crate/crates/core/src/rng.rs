//! Keyed random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream whose key
//! is derived from `(master seed, domain, a, b)`. ChaCha is a counter-based
//! generator, so a stream depends only on its key and never on how work was
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domains separate the key space of unrelated consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    PanelSample = 1,
    Projection = 2,
    BrownianPath = 3,
    Replication = 4,
    IntervalExtrema = 5,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one 64-bit value.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(GOLDEN, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// FNV-1a over bytes; used for stable cell identifiers.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Generator for the stream identified by `(seed, domain, a, b)`.
pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = mix(&[seed, domain as u64, a, b]);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
