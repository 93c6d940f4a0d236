//! Seeded random streams and seed derivation.
//!
//! Every stochastic routine takes an explicit `&mut impl Rng`. Streams are
//! ChaCha8, whose output is value-stable across crate versions, so a master
//! seed pins an experiment bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One round of the splitmix64 finaliser.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds a tuple of words into one seed: `h = splitmix64(h ^ w)` per word,
/// starting from `splitmix64(master)`.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(master), |h, &w| splitmix64(h ^ w))
}

/// FNV-1a over a string, for folding labels into [`derive_seed`].
pub fn label_word(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
