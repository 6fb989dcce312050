use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::edb::{PartitionConfig, DEFAULT_BLOCK_SIZE, DEFAULT_FPR};
use crate::error::{Error, IoContext, Result};
use crate::gc::DEFAULT_MAX_SORT;
use crate::mpc::{PoolConfig, RunMode, TripleSource};

/// Server addresses, `cluster{0,1}[shard]`. Shard 0 of each cluster is its
/// coordinator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub cluster0: Vec<String>,
    pub cluster1: Vec<String>,
}

impl Topology {
    /// Loopback names `c{i}s{j}`.
    pub fn local(shards: usize) -> Self {
        let names = |c: usize| (0..shards).map(|j| format!("c{c}s{j}")).collect();
        Topology { cluster0: names(0), cluster1: names(1) }
    }

    /// Consecutive TCP ports: cluster 0 from `base`, cluster 1 from `base + 100`.
    pub fn tcp(host: &str, base: u16, shards: usize) -> Self {
        let names = |off: u16| (0..shards).map(|j| format!("{host}:{}", base + off + j as u16)).collect();
        Topology { cluster0: names(0), cluster1: names(100) }
    }

    pub fn shards(&self) -> usize {
        self.cluster0.len()
    }

    pub fn addr(&self, cluster: u8, shard: usize) -> &str {
        if cluster == 0 {
            &self.cluster0[shard]
        } else {
            &self.cluster1[shard]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cluster0.is_empty() || self.cluster0.len() != self.cluster1.len() {
            return Err(Error::Config(format!(
                "clusters need the same non-zero shard count, got {} and {}",
                self.cluster0.len(),
                self.cluster1.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdbParams {
    pub block_size: usize,
    pub fpr: f64,
}

impl Default for EdbParams {
    fn default() -> Self {
        EdbParams { block_size: DEFAULT_BLOCK_SIZE, fpr: DEFAULT_FPR }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerParams {
    /// Largest per-shard vector a local sort accepts.
    pub max_sort_k: usize,
    pub run_mode: RunMode,
    /// Only honoured in `dealer-test` mode.
    pub dealer_seed: Option<u64>,
    /// Local sort sizes garbled once at startup.
    pub precompute: Vec<usize>,
    pub timeout_ms: u64,
    pub refill_interval_ms: u64,
    /// Record every frame for the leakage audit.
    pub record: bool,
    pub transcript_dir: Option<PathBuf>,
}

impl Default for ServerParams {
    fn default() -> Self {
        ServerParams {
            max_sort_k: DEFAULT_MAX_SORT,
            run_mode: RunMode::Secure,
            dealer_seed: None,
            precompute: vec![2, 4, 8, 16, 32, 64, 128],
            timeout_ms: 30_000,
            refill_interval_ms: 250,
            record: false,
            transcript_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub topology: Topology,
    #[serde(default)]
    pub edb: EdbParams,
    #[serde(default)]
    pub server: ServerParams,
    #[serde(default)]
    pub pool: PoolConfig,
}

impl ClusterConfig {
    pub fn local(shards: usize) -> Self {
        ClusterConfig {
            topology: Topology::local(shards),
            edb: EdbParams::default(),
            server: ServerParams::default(),
            pool: PoolConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: ClusterConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).io_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.partition().validate()?;
        self.triple_source()?;
        if self.server.max_sort_k == 0 {
            return Err(Error::Config("max_sort_k must be positive".into()));
        }
        Ok(())
    }

    pub fn partition(&self) -> PartitionConfig {
        PartitionConfig {
            shards: self.topology.shards(),
            block_size: self.edb.block_size,
            fpr: self.edb.fpr,
            ..Default::default()
        }
    }

    pub fn triple_source(&self) -> Result<TripleSource> {
        TripleSource::new(self.server.run_mode, self.server.dealer_seed)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.server.timeout_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_and_defaults() {
        let c = ClusterConfig::parse(
            "[topology]\ncluster0 = [\"a\", \"b\"]\ncluster1 = [\"c\", \"d\"]\n[server]\nmax_sort_k = 256\n",
        )
        .unwrap();
        assert_eq!(c.topology.shards(), 2);
        assert_eq!(c.server.max_sort_k, 256);
        assert_eq!(c.pool, PoolConfig::default());
        assert_eq!(ClusterConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ClusterConfig::parse("[topology]\ncluster0 = [\"a\"]\ncluster1 = []\n").is_err());
        let dealer_in_secure = "[topology]\ncluster0 = [\"a\"]\ncluster1 = [\"b\"]\n[server]\ndealer_seed = 3\n";
        assert!(matches!(ClusterConfig::parse(dealer_in_secure), Err(Error::Config(_))));
        let ok = dealer_in_secure.replace("dealer_seed", "run_mode = \"dealer-test\"\ndealer_seed");
        assert!(ClusterConfig::parse(&ok).is_ok());
        assert!(ClusterConfig::parse("[topology]\ncluster0 = [\"a\"]\ncluster1 = [\"b\"]\nbogus = 1\n").is_err());
    }
}
