use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::crypto::ShardHasher;
use crate::error::{Error, Result};
use crate::graph::{IndexingTerm, InvertedIndex, PostingList};
use crate::mpc::{ring_sub, RING_MASK};

pub const DEFAULT_BLOCK_SIZE: usize = 100;
pub const DEFAULT_FPR: f64 = 1e-6;

/// Build parameters; both clusters must be deployed with the same values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    pub shards: usize,
    pub block_size: usize,
    pub fpr: f64,
    pub hasher: ShardHasher,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            shards: 1,
            block_size: DEFAULT_BLOCK_SIZE,
            fpr: DEFAULT_FPR,
            hasher: ShardHasher::default(),
        }
    }
}

impl PartitionConfig {
    pub fn with_shards(shards: usize) -> Self {
        PartitionConfig { shards, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shards == 0 {
            return Err(Error::Config("shard count must be positive".into()));
        }
        if self.block_size == 0 || self.block_size > u16::MAX as usize {
            return Err(Error::Config("block size must lie in 1..=65535".into()));
        }
        if !(self.fpr > 0.0 && self.fpr < 1.0) {
            return Err(Error::Config("bloom fpr must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Splits every posting list by result id; entries keep their stored order.
pub fn partition(index: &InvertedIndex, config: &PartitionConfig) -> Result<Vec<InvertedIndex>> {
    config.validate()?;
    let mut parts: Vec<Vec<PostingList>> = vec![Vec::new(); config.shards];
    for list in index.lists() {
        let mut split: Vec<Vec<_>> = vec![Vec::new(); config.shards];
        for p in &list.entries {
            split[config.hasher.shard_of(p.id, config.shards)?].push(*p);
        }
        for (j, entries) in split.into_iter().enumerate() {
            if !entries.is_empty() {
                parts[j].push(PostingList::new(list.term.clone(), entries));
            }
        }
    }
    Ok(parts.into_iter().map(InvertedIndex::from_lists).collect())
}

/// Cluster-0 and cluster-1 sort-key shares, aligned with each list's entries.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SortKeyShares {
    pub lists: BTreeMap<IndexingTerm, Vec<u32>>,
}

/// `share0` uniform in Z_{2^31}, `share1 = key - share0`.
pub fn share_sortkeys<R: RngCore + CryptoRng>(
    index: &InvertedIndex,
    rng: &mut R,
) -> (SortKeyShares, SortKeyShares) {
    let mut s0 = SortKeyShares::default();
    let mut s1 = SortKeyShares::default();
    for list in index.lists() {
        let (a, b): (Vec<u32>, Vec<u32>) = list
            .entries
            .iter()
            .map(|p| {
                let r = rng.next_u32() & RING_MASK;
                (r, ring_sub(p.sort_key, r))
            })
            .unzip();
        s0.lists.insert(list.term.clone(), a);
        s1.lists.insert(list.term.clone(), b);
    }
    (s0, s1)
}
