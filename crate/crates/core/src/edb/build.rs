use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bloom::BloomFilter;
use super::partition::{partition, share_sortkeys, PartitionConfig, SortKeyShares};
use super::tset::{EncryptedTuple, TSetShard, TUPLE_LEN};
use crate::crypto::{
    blinding_exponent, encrypt_id, stag_derive, term_key, xtag_compute, GroupContext, MasterKeyBundle,
};
use crate::error::{Error, IoContext, Result};
use crate::graph::InvertedIndex;

pub const EDB_FORMAT: &str = "encgraph-edb/1";
pub const REFERENCE_TUPLE_BYTES: usize = 56;
/// Plaintext entry: 4-byte sort-key plus 8-byte id.
pub const PLAIN_ENTRY_BYTES: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub cluster: u8,
    pub shard: usize,
    pub config: PartitionConfig,
    pub share_modulus_bits: u32,
    pub terms: usize,
    pub tuples: u64,
    pub blocks: usize,
    pub tuple_bytes: usize,
    pub xset_elements: u64,
    pub xset_bits: u64,
    pub xset_hashes: u32,
    pub seed_fingerprint: String,
    pub tset: FileDigest,
    pub xset: FileDigest,
}

/// Everything one index server loads at startup.
#[derive(Clone, Debug)]
pub struct ShardEdb {
    pub manifest: Manifest,
    pub tset: TSetShard,
    pub xset: BloomFilter,
}

/// Both clusters' databases: `servers[cluster][shard]`.
#[derive(Clone, Debug)]
pub struct Edb {
    pub config: PartitionConfig,
    pub servers: [Vec<ShardEdb>; 2],
}

fn digest(bytes: &[u8]) -> FileDigest {
    FileDigest {
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(bytes)),
    }
}

fn seed_fingerprint(seed: u64) -> String {
    hex::encode(&Sha256::digest(seed.to_be_bytes())[..8])
}

/// Encrypts one shard for both clusters. Tuple counters are 1-based and
/// shard-local; e_id and y are shared by the counterpart pair, only the
/// sort-key shares differ.
fn build_shard(
    sub: &InvertedIndex,
    keys: &MasterKeyBundle,
    config: &PartitionConfig,
    shard: usize,
    seed: u64,
) -> [ShardEdb; 2] {
    let ctx = GroupContext::new();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (shard as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let shares: [SortKeyShares; 2] = {
        let (a, b) = share_sortkeys(sub, &mut rng);
        [a, b]
    };
    let mut tsets = [TSetShard::new(config.block_size), TSetShard::new(config.block_size)];
    let mut xset = BloomFilter::with_rate(sub.total_entries(), config.fpr);
    for list in sub.lists() {
        let stag = stag_derive(keys, &list.term);
        let kt = term_key(keys, &list.term);
        let mut tuples: [Vec<EncryptedTuple>; 2] = [Vec::new(), Vec::new()];
        for (i, p) in list.entries.iter().enumerate() {
            let c = i as u64 + 1;
            let e_id = encrypt_id(&kt, p.id, &mut rng);
            let y = blinding_exponent(keys, &list.term, c, p.id);
            xset.insert(&xtag_compute(keys, &ctx, &list.term, p.id).0);
            for cl in 0..2 {
                tuples[cl].push(EncryptedTuple {
                    share: shares[cl].lists[&list.term][i],
                    e_id,
                    y: y.clone(),
                });
            }
        }
        for cl in 0..2 {
            tsets[cl].insert_list(&stag, &tuples[cl]);
        }
    }
    let xbytes = xset.to_bytes();
    let blocks: usize = sub
        .lists()
        .map(|l| l.len().div_ceil(config.block_size))
        .sum();
    let [t0, t1] = tsets;
    [(0u8, t0), (1u8, t1)].map(|(cluster, tset)| {
        let manifest = Manifest {
            format: EDB_FORMAT.into(),
            cluster,
            shard,
            config: config.clone(),
            share_modulus_bits: crate::mpc::RING_BITS,
            terms: sub.term_count(),
            tuples: tset.tuple_count(),
            blocks,
            tuple_bytes: TUPLE_LEN,
            xset_elements: xset.len(),
            xset_bits: xset.bit_len(),
            xset_hashes: xset.hash_count(),
            seed_fingerprint: seed_fingerprint(seed),
            tset: digest(&tset.to_bytes()),
            xset: digest(&xbytes),
        };
        ShardEdb { manifest, tset, xset: xset.clone() }
    })
}

/// Partitions, shares and encrypts `index` for both clusters. Shards are
/// built in parallel; output depends only on (index, keys, config, seed).
pub fn build_edb(
    index: &InvertedIndex,
    keys: &MasterKeyBundle,
    config: &PartitionConfig,
    seed: u64,
) -> Result<Edb> {
    let parts = partition(index, config)?;
    let built: Vec<[ShardEdb; 2]> = std::thread::scope(|s| {
        let handles: Vec<_> = parts
            .iter()
            .enumerate()
            .map(|(j, sub)| s.spawn(move || build_shard(sub, keys, config, j, seed)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("shard builder panicked")).collect()
    });
    let mut servers = [Vec::new(), Vec::new()];
    for [a, b] in built {
        servers[0].push(a);
        servers[1].push(b);
    }
    Ok(Edb { config: config.clone(), servers })
}

pub fn shard_dir(root: &Path, cluster: u8, shard: usize) -> PathBuf {
    root.join(format!("cluster{cluster}")).join(format!("shard{shard}"))
}

/// Writes `root/cluster{i}/shard{j}/{tset.bin,xset.bin,manifest.json}`.
pub fn emit_edb(edb: &Edb, root: &Path) -> Result<()> {
    for s in edb.servers.iter().flatten() {
        let dir = shard_dir(root, s.manifest.cluster, s.manifest.shard);
        fs::create_dir_all(&dir).io_context(|| format!("creating {}", dir.display()))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            fs::write(&p, bytes).io_context(|| format!("writing {}", p.display()))
        };
        write("tset.bin", &s.tset.to_bytes())?;
        write("xset.bin", &s.xset.to_bytes())?;
        let json = serde_json::to_string_pretty(&s.manifest).expect("manifest serialises");
        write("manifest.json", json.as_bytes())?;
    }
    Ok(())
}

/// Loads one server's shard, verifying both file checksums.
pub fn load_shard(dir: &Path) -> Result<ShardEdb> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read(&p).io_context(|| format!("reading {}", p.display())).map(|b| (p, b))
    };
    let (mp, mbytes) = read("manifest.json")?;
    let manifest: Manifest = serde_json::from_slice(&mbytes)
        .map_err(|e| Error::Config(format!("{}: {e}", mp.display())))?;
    if manifest.format != EDB_FORMAT {
        return Err(Error::Config(format!("{}: unknown format {}", mp.display(), manifest.format)));
    }
    let (tp, tbytes) = read("tset.bin")?;
    if digest(&tbytes) != manifest.tset {
        return Err(Error::Checksum(tp));
    }
    let (xp, xbytes) = read("xset.bin")?;
    if digest(&xbytes) != manifest.xset {
        return Err(Error::Checksum(xp));
    }
    let tset = TSetShard::from_bytes(&tbytes)?;
    let xset = BloomFilter::from_bytes(&xbytes)?;
    if xset.len() != manifest.xset_elements || tset.tuple_count() != manifest.tuples {
        return Err(Error::Config(format!("{}: counts disagree with manifest", mp.display())));
    }
    Ok(ShardEdb { manifest, tset, xset })
}

/// Storage accounting for the setup report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StorageReport {
    pub entries: u64,
    pub tuple_bytes: usize,
    pub reference_tuple_bytes: usize,
    pub plaintext_bytes: u64,
    pub tset_bytes_per_shard: Vec<u64>,
    pub xset_bytes_per_shard: Vec<u64>,
    pub tset_bytes: u64,
    pub xset_bytes: u64,
    /// One cluster's footprint.
    pub cluster_bytes: u64,
    pub total_bytes: u64,
    /// Per-cluster encrypted size relative to the plaintext index.
    pub overhead_ratio: f64,
    pub xset_to_plain_ratio: f64,
}

pub fn storage_report(edb: &Edb) -> StorageReport {
    let c0 = &edb.servers[0];
    let entries: u64 = c0.iter().map(|s| s.manifest.tuples).sum();
    let tset_bytes_per_shard: Vec<u64> = c0.iter().map(|s| s.manifest.tset.bytes).collect();
    let xset_bytes_per_shard: Vec<u64> = c0.iter().map(|s| s.manifest.xset.bytes).collect();
    let tset_bytes: u64 = tset_bytes_per_shard.iter().sum();
    let xset_bytes: u64 = xset_bytes_per_shard.iter().sum();
    let cluster_bytes = tset_bytes + xset_bytes;
    let total_bytes: u64 = edb
        .servers
        .iter()
        .flatten()
        .map(|s| s.manifest.tset.bytes + s.manifest.xset.bytes)
        .sum();
    let plaintext_bytes = entries * PLAIN_ENTRY_BYTES as u64;
    let ratio = |x: u64| if plaintext_bytes == 0 { 0.0 } else { x as f64 / plaintext_bytes as f64 };
    StorageReport {
        entries,
        tuple_bytes: TUPLE_LEN,
        reference_tuple_bytes: REFERENCE_TUPLE_BYTES,
        plaintext_bytes,
        tset_bytes_per_shard,
        xset_bytes_per_shard,
        tset_bytes,
        xset_bytes,
        cluster_bytes,
        total_bytes,
        overhead_ratio: ratio(cluster_bytes),
        xset_to_plain_ratio: ratio(xset_bytes),
    }
}
