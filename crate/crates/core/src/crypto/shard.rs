use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::EntityId;

/// Maps a result id to a shard. Both clusters use the same hasher.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShardHasher {
    /// First 8 bytes of SHA-256 over the big-endian id.
    #[default]
    Sha256,
    /// The id itself; only for analytically checkable tests.
    Identity,
}

impl ShardHasher {
    pub fn shard_of(&self, id: EntityId, shard_count: usize) -> Result<usize> {
        if shard_count == 0 {
            return Err(Error::Config("shard count must be at least 1".into()));
        }
        let h = match self {
            ShardHasher::Identity => id.0,
            ShardHasher::Sha256 => {
                let digest = Sha256::digest(id.to_be_bytes());
                u64::from_be_bytes(digest[..8].try_into().unwrap())
            }
        };
        Ok((h % shard_count as u64) as usize)
    }
}

pub fn hash_to_shard(id: EntityId, shard_count: usize) -> Result<usize> {
    ShardHasher::Sha256.shard_of(id, shard_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn small_cases() {
        assert_eq!(hash_to_shard(EntityId(123), 1).unwrap(), 0);
        assert_eq!(ShardHasher::Identity.shard_of(EntityId(7), 2).unwrap(), 1);
        assert!(hash_to_shard(EntityId(1), 0).is_err());
    }

    #[test]
    fn distribution_is_balanced() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(99);
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            counts[hash_to_shard(EntityId(rng.gen()), 3).unwrap()] += 1;
        }
        for c in counts {
            let frac = c as f64 / n as f64;
            assert!((frac - 1.0 / 3.0).abs() < 0.05 / 3.0, "{counts:?}");
        }
    }
}
