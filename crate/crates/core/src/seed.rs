//! Deterministic RNG stream derivation.
//!
//! Every random computation in the crate draws from a `ChaCha8Rng` whose seed
//! is derived from a master seed and a structural path (e.g. `(spec index,
//! sample-size index, replication index)` in the Monte Carlo harness). Stream
//! identity therefore depends only on *what* is being computed, never on
//! thread scheduling, which is what makes parallel runs bit-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One step of Vigna's splitmix64 generator: a cheap, well-mixed 64-bit
/// permutation used here purely as a seed scrambler.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a structural path into a stream seed.
///
/// Each path component is scrambled before being folded in, so paths that
/// differ in a single small integer produce unrelated seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &part in path {
        state = splitmix64(state ^ splitmix64(part));
    }
    state
}

/// A `ChaCha8Rng` for the stream identified by `(master, path)`.
pub fn stream_rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
