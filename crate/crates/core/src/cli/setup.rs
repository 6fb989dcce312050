use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use encgraph::crypto::MasterKeyBundle;
use encgraph::edb::{build_edb, emit_edb, storage_report, Edb};
use encgraph::graph::{build_inverted_index, load_edge_list};
use encgraph::server::{ClusterConfig, Topology};
use encgraph::{Error, Result};

use super::layout::{edb_root, write_json, Dataset, CONFIG_FILE, DATASET_FILE, KEYS_FILE};

/// Published memory increase of the encrypted index over the plaintext store.
const REFERENCE_MEMORY_INCREASE: f64 = 0.85;

#[derive(Args, Debug)]
pub struct SetupArgs {
    /// Edge list, one `src dst [weight]` per line.
    #[arg(long)]
    pub edges: PathBuf,
    /// Output directory for the EDB, keys and cluster config.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "friend")]
    pub edge_type: String,
    /// Draw weights uniformly in [1, 100] from this seed instead of reading them.
    #[arg(long)]
    pub random_weights: Option<u64>,
    /// Ignored when --config gives a topology.
    #[arg(long, default_value_t = 2)]
    pub shards: usize,
    /// Fixed seed for keys and sort-key shares; output is then reproducible.
    #[arg(long)]
    pub seed: Option<u64>,
    /// First TCP port of the generated topology.
    #[arg(long, default_value_t = 7700)]
    pub tcp_base: u16,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub fpr: Option<f64>,
}

/// Hash over every shard file digest, in server order.
pub fn edb_fingerprint(edb: &Edb) -> String {
    let mut h = Sha256::new();
    for s in edb.servers.iter().flatten() {
        h.update(s.manifest.tset.sha256.as_bytes());
        h.update(s.manifest.xset.sha256.as_bytes());
    }
    hex::encode(h.finalize())
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn run(args: SetupArgs, config: Option<PathBuf>) -> Result<()> {
    let mut cfg = match &config {
        Some(p) => ClusterConfig::load(p)?,
        None => {
            let mut c = ClusterConfig::local(args.shards);
            c.topology = Topology::tcp("127.0.0.1", args.tcp_base, args.shards);
            c
        }
    };
    if let Some(b) = args.block_size {
        cfg.edb.block_size = b;
    }
    if let Some(f) = args.fpr {
        cfg.edb.fpr = f;
    }
    cfg.validate()?;
    let total = Instant::now();

    let t = Instant::now();
    let dataset = Dataset {
        edges: args.edges.canonicalize().map_err(|e| Error::Config(format!("{}: {e}", args.edges.display())))?,
        edge_type: args.edge_type.clone(),
        random_weights: args.random_weights,
    };
    let graph = load_edge_list(&dataset.edges, &dataset.edge_type, dataset.policy())?;
    println!("stage load      {:>9.1} ms  {} edges", ms(t), graph.edge_count());

    let t = Instant::now();
    let index = build_inverted_index(&graph);
    println!("stage index     {:>9.1} ms  {} terms, {} entries", ms(t), index.term_count(), index.total_entries());

    let t = Instant::now();
    let (keys, seed) = match args.seed {
        Some(s) => (MasterKeyBundle::generate(&mut ChaCha20Rng::seed_from_u64(s)), s),
        None => (MasterKeyBundle::generate(&mut OsRng), OsRng.next_u64()),
    };
    println!("stage keys      {:>9.1} ms", ms(t));

    let t = Instant::now();
    let edb = build_edb(&index, &keys, &cfg.partition(), seed)?;
    println!("stage encrypt   {:>9.1} ms  {} shards x 2 clusters", ms(t), cfg.topology.shards());

    let t = Instant::now();
    std::fs::create_dir_all(&args.out).map_err(|e| Error::Config(format!("{}: {e}", args.out.display())))?;
    emit_edb(&edb, &edb_root(&args.out))?;
    keys.write_keystore(&args.out.join(KEYS_FILE))?;
    std::fs::write(args.out.join(CONFIG_FILE), cfg.to_toml())
        .map_err(|e| Error::Config(format!("writing config: {e}")))?;
    write_json(&args.out.join(DATASET_FILE), &dataset)?;
    println!("stage emit      {:>9.1} ms", ms(t));
    println!("total           {:>9.1} ms", ms(total));

    let r = storage_report(&edb);
    println!("storage:");
    for (j, (ts, xs)) in r.tset_bytes_per_shard.iter().zip(&r.xset_bytes_per_shard).enumerate() {
        println!("  shard {j}: tset {ts} bytes, xset {xs} bytes");
    }
    let sums_ok = r.tset_bytes_per_shard.iter().sum::<u64>() == r.tset_bytes
        && r.xset_bytes_per_shard.iter().sum::<u64>() == r.xset_bytes
        && r.tset_bytes + r.xset_bytes == r.cluster_bytes;
    println!("  tset total {} bytes, xset total {} bytes, per cluster {} bytes", r.tset_bytes, r.xset_bytes, r.cluster_bytes);
    println!("  both clusters {} bytes", r.total_bytes);
    println!("  shard sums match totals: {}", if sums_ok { "yes" } else { "NO" });
    println!(
        "  per tuple {} bytes (reference {} bytes, {:+.1}%)",
        r.tuple_bytes,
        r.reference_tuple_bytes,
        (r.tuple_bytes as f64 / r.reference_tuple_bytes as f64 - 1.0) * 100.0
    );
    println!(
        "  plaintext index {} bytes; encrypted per cluster {:+.0}% over plaintext (reference {:+.0}%)",
        r.plaintext_bytes,
        (r.overhead_ratio - 1.0) * 100.0,
        REFERENCE_MEMORY_INCREASE * 100.0
    );
    println!("edb fingerprint {}", edb_fingerprint(&edb));
    println!("wrote {}", args.out.display());
    Ok(())
}
