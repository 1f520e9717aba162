//! Seed derivation. Every random stream in a run is derived from one master
//! seed and a stream label, so a single number reproduces the whole run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// First 8 bytes (little endian) of `SHA-256(master_le || label)`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_for(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_label_sensitive() {
        assert_eq!(derive_seed(7, "env"), derive_seed(7, "env"));
        assert_ne!(derive_seed(7, "env"), derive_seed(7, "train"));
        assert_ne!(derive_seed(7, "env"), derive_seed(8, "env"));
    }

    #[test]
    fn frozen_value() {
        // Guards the documented derivation against accidental changes.
        let expected = {
            let digest = Sha256::digest([&1u64.to_le_bytes()[..], b"env"].concat());
            u64::from_le_bytes(digest[..8].try_into().unwrap())
        };
        assert_eq!(derive_seed(1, "env"), expected);
    }
}
