//! Deterministic substream seeding.
//!
//! Every randomized stage derives its generator from a master seed plus a
//! label path, e.g. `substream(seed, &["null", discipline, "2005", "7"])`.
//! The derived stream depends only on the label, never on iteration order
//! or thread schedule, so serial and parallel runs produce identical
//! results and work units can be recomputed in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Number of work items per deterministic chunk in parallel resampling
/// loops. Fixed so that results do not depend on the thread count.
pub const CHUNK: usize = 1024;

/// Derive a generator from `master` and a label path.
///
/// The path is hashed with length prefixes, so `["ab","c"]` and `["a","bc"]`
/// give unrelated streams.
pub fn substream(master: u64, path: &[&str]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for part in path {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Substream for the `index`-th chunk of a named resampling loop.
pub fn chunk_stream(master: u64, label: &str, index: usize) -> ChaCha8Rng {
    substream(master, &[label, &index.to_string()])
}

/// Derive a child seed (for APIs that take a plain seed) from a label path.
pub fn derive_seed(master: u64, path: &[&str]) -> u64 {
    use rand::Rng;
    substream(master, path).random()
}
