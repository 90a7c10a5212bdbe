//! Deterministic random-number streams.
//!
//! Every stochastic consumer (environment events, dropout masks,
//! reparameterization noise, action sampling, batch indices, weight init)
//! draws from its own named stream derived from the single root seed. Streams
//! are independent, so adding draws to one consumer never perturbs another,
//! which is what makes whole-run outputs reproducible byte for byte.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere in this crate.
pub type Stream = ChaCha8Rng;

/// FNV-1a hash of a stream name.
fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the 64-bit seed for a named stream from the root seed.
pub fn stream_seed(root: u64, name: &str) -> u64 {
    // Rotate the root so that nearby seeds do not collide after the xor, then
    // mix in the name hash. SplitMix inside `seed_from_u64` does the rest.
    root.rotate_left(17) ^ fnv1a(name)
}

/// Construct the named stream.
pub fn stream(root: u64, name: &str) -> Stream {
    ChaCha8Rng::seed_from_u64(stream_seed(root, name))
}
