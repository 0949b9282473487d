//! Seed-stream derivation.
//!
//! Every stochastic stage owns an independent ChaCha8 stream derived from
//! (root seed, stage tag, indices). Streams never depend on worker count or
//! iteration order, so any stage can be sharded without changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive an independent RNG stream from a root seed and a tag path.
///
/// The tag keeps streams for different purposes disjoint ("collect",
/// "pairs", ...); the indices separate per-episode / per-draw streams.
pub fn stream(seed: u64, tag: &str, indices: &[u64]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    for ix in indices {
        h.update(ix.to_le_bytes());
    }
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Derive a child seed (same hashing scheme as `stream`, first 8 digest bytes).
pub fn derive_seed(seed: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    for ix in indices {
        h.update(ix.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Standard normal draw via Box-Muller; always consumes exactly two uniforms
/// so streams stay aligned across refactors.
pub fn gaussian<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
