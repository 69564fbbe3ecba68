//! Seeded randomness.
//!
//! Every stochastic stage draws from its own ChaCha8 stream. The stream seed is
//! the first 8 bytes (little endian) of `SHA-256(run_seed.to_le_bytes() || stage)`,
//! so each stage is reproducible on its own and independent of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn stage_seed(run_seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
