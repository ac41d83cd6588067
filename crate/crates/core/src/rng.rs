//! Named random streams derived from a single root seed.
//!
//! Every stochastic component asks for its own stream by label, so adding or
//! reordering components never shifts another component's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Stream for `label` under `seed`. The ChaCha key is SHA-256 of the seed
/// bytes followed by the label, which is stable across platforms.
pub fn stream(seed: u64, label: &str) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}
