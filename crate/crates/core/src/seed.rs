//! Deterministic seed derivation. Every consumer of randomness draws from a
//! stream keyed by the root seed, a stream name and a tuple of indices, so
//! any stream can be reproduced on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive(root: u64, stream: &str, index: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update((stream.len() as u64).to_le_bytes());
    h.update(stream.as_bytes());
    for i in index {
        h.update(i.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

pub fn rng(root: u64, stream: &str, index: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, stream, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        assert_eq!(derive(1, "init", &[]), derive(1, "init", &[]));
        assert_ne!(derive(1, "init", &[]), derive(2, "init", &[]));
        assert_ne!(derive(1, "init", &[]), derive(1, "data", &[]));
        assert_ne!(derive(1, "a", &[1, 2]), derive(1, "a", &[2, 1]));
        // Stream name length is hashed, so name/index boundaries cannot alias.
        assert_ne!(derive(1, "ab", &[]), derive(1, "a", &[u64::from(b'b')]));
    }
}
