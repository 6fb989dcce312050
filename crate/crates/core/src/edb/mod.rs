//! Setup pipeline: partition the inverted index by result id, encrypt
//! posting lists into TSet shards, build per-shard XSet Bloom filters and
//! split sort-keys into additive shares for the two clusters.

mod bloom;
mod build;
mod partition;
mod tset;

pub use bloom::BloomFilter;
pub use build::{
    build_edb, emit_edb, load_shard, shard_dir, storage_report, Edb, FileDigest, Manifest, ShardEdb,
    StorageReport, EDB_FORMAT, REFERENCE_TUPLE_BYTES, PLAIN_ENTRY_BYTES,
};
pub use partition::{
    partition, share_sortkeys, PartitionConfig, SortKeyShares, DEFAULT_BLOCK_SIZE, DEFAULT_FPR,
};
pub use tset::{EncryptedTuple, KvStore, MemKv, TSetShard, TUPLE_LEN};
