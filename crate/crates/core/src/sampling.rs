//! Seeded, order-independent randomness.
//!
//! Every random choice draws from its own ChaCha8 stream keyed by
//! SHA-256 over a version tag, the run seed, a purpose label and the ids of
//! the record being processed. Results therefore do not depend on the order
//! or thread in which records are visited.

use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Version tag mixed into every key. Bump when the derivation changes.
pub const SAMPLING_VERSION: &str = "aquallm-sampling-v1/chacha8";

pub fn stream_rng(seed: u64, purpose: &str, ids: &[&str]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(SAMPLING_VERSION.as_bytes());
    hasher.update(seed.to_le_bytes());
    for part in core::iter::once(purpose).chain(ids.iter().copied()) {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Up to `attempts` distinct indices below `len`, in draw order.
pub fn attempt_order(rng: &mut ChaCha8Rng, len: usize, attempts: usize) -> Vec<usize> {
    index::sample(rng, len, attempts.min(len)).into_vec()
}
