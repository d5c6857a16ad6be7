//! Per-episode seed derivation.
//!
//! Every random decision in a run is keyed by
//! `(global_seed, dataset_id, episode_index, role)` so that runs are reproducible
//! without the caller tracking seeds, and different episodes or roles never share
//! a stream.

use sha2::{Digest, Sha256};

/// What a derived seed is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeedRole {
    /// Which frames of the evaluated episode are sampled.
    Sample,
    /// Presentation order of the evaluated frames.
    Shuffle,
    /// Which donor episodes provide context.
    ContextPick,
    /// Frame sampling of the `i`-th context episode.
    ContextSample(u32),
    /// Presentation order of the `i`-th context episode.
    ContextShuffle(u32),
}

impl SeedRole {
    fn tag(self) -> ([u8; 1], u32) {
        match self {
            SeedRole::Sample => ([0], 0),
            SeedRole::Shuffle => ([1], 0),
            SeedRole::ContextPick => ([2], 0),
            SeedRole::ContextSample(i) => ([3], i),
            SeedRole::ContextShuffle(i) => ([4], i),
        }
    }
}

/// Hashes the inputs with SHA-256 and returns the first eight digest bytes as a
/// little-endian integer. Fields are length-prefixed so that no two distinct
/// inputs share an encoding.
pub fn derive_seed(global_seed: u64, dataset_id: &str, episode_index: u64, role: SeedRole) -> u64 {
    let (kind, slot) = role.tag();
    let mut hasher = Sha256::new();
    hasher.update(b"gvl-seed-v1");
    hasher.update(global_seed.to_le_bytes());
    hasher.update((dataset_id.len() as u64).to_le_bytes());
    hasher.update(dataset_id.as_bytes());
    hasher.update(episode_index.to_le_bytes());
    hasher.update(kind);
    hasher.update(slot.to_le_bytes());
    first_u64(&hasher.finalize())
}

/// Mixes an arbitrary byte string into a seed. Used where the key is content
/// rather than an episode coordinate.
pub fn seed_from_bytes(base: u64, bytes: &[u8]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"gvl-content-v1");
    hasher.update(base.to_le_bytes());
    hasher.update(bytes);
    first_u64(&hasher.finalize())
}

fn first_u64(digest: &[u8]) -> u64 {
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn stable_and_distinct() {
        let a = derive_seed(42, "nyu_door", 3, SeedRole::Sample);
        assert_eq!(a, derive_seed(42, "nyu_door", 3, SeedRole::Sample));
        let mut seen = BTreeSet::new();
        for ep in 0..50 {
            for role in [
                SeedRole::Sample,
                SeedRole::Shuffle,
                SeedRole::ContextPick,
                SeedRole::ContextSample(0),
                SeedRole::ContextSample(1),
                SeedRole::ContextShuffle(0),
                SeedRole::ContextShuffle(1),
            ] {
                assert!(seen.insert(derive_seed(42, "nyu_door", ep, role)));
            }
        }
        assert_ne!(a, derive_seed(43, "nyu_door", 3, SeedRole::Sample));
        assert_ne!(a, derive_seed(42, "nyu_doo", 3, SeedRole::Sample));
    }
}
