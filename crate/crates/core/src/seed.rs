//! Seed derivation for reproducible random streams.
//!
//! Every random stream comes from one master seed. A ChaCha8 generator keyed
//! by the master seed is split into independent streams by *replication*
//! (the ChaCha stream id), and each simulation step starts at a fixed word
//! offset `step * STEP_WORDS` inside that stream. Any (replication, step)
//! pair can therefore be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words of keystream reserved per step (2^24 32-bit words, i.e. 2^23 u64 draws).
pub const STEP_WORDS: u128 = 1 << 24;

/// Generator for replication `rep`, positioned at the start of its stream.
pub fn replication_rng(master: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(rep);
    rng
}

/// Generator for one step of one replication.
pub fn step_rng(master: u64, rep: u64, step: u64) -> ChaCha8Rng {
    let mut rng = replication_rng(master, rep);
    rng.set_word_pos(u128::from(step) * STEP_WORDS);
    rng
}

/// Derive a child seed for a named purpose, e.g. weight sampling vs. initial
/// conditions drawn from the same master seed.
pub fn derive(master: u64, purpose: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = master ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
