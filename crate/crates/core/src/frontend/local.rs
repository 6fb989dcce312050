use std::path::Path;
use std::sync::Arc;

use super::{FrontEnd, QueryOutcome};
use crate::crypto::MasterKeyBundle;
use crate::edb::{shard_dir, Edb};
use crate::error::{Error, Result};
use crate::graph::EntityId;
use crate::planner::QueryRequest;
use crate::server::{ClusterConfig, IndexServer, ShardStore, Topology};
use crate::transport::{LoopbackNetwork, Network, Transcript};

/// Every party in one process over the loopback fabric.
pub struct LocalCluster {
    pub net: Arc<LoopbackNetwork>,
    pub config: ClusterConfig,
    servers: Vec<IndexServer>,
    frontend: FrontEnd,
}

impl LocalCluster {
    /// Starts servers over an in-memory EDB. The topology is replaced by
    /// loopback names sized to the EDB.
    pub fn start(edb: &Edb, keys: &MasterKeyBundle, config: ClusterConfig) -> Result<Self> {
        let shards = edb.servers[0].len();
        Self::launch(keys, config, shards, |c, j| Ok(ShardStore { edb: edb.servers[c as usize][j].clone() }))
    }

    /// Starts servers from EDB files written by setup.
    pub fn open(root: &Path, keys: &MasterKeyBundle, config: ClusterConfig) -> Result<Self> {
        let mut shards = 0;
        while shard_dir(root, 0, shards).is_dir() {
            shards += 1;
        }
        if shards == 0 {
            return Err(Error::Config(format!("{} holds no shard directories", root.display())));
        }
        Self::launch(keys, config, shards, |c, j| ShardStore::open(&shard_dir(root, c, j)))
    }

    fn launch(
        keys: &MasterKeyBundle,
        mut config: ClusterConfig,
        shards: usize,
        mut store: impl FnMut(u8, usize) -> Result<ShardStore>,
    ) -> Result<Self> {
        config.topology = Topology::local(shards);
        let net = LoopbackNetwork::new();
        let dyn_net: Arc<dyn Network> = net.clone();
        let mut servers = Vec::with_capacity(2 * shards);
        // Cluster 1 first so cluster 0 can pre-fill its triple pool.
        for c in [1u8, 0] {
            for j in 0..shards {
                servers.push(IndexServer::start(config.clone(), c, j, store(c, j)?, dyn_net.clone())?);
            }
        }
        servers.sort_by_key(|s| (s.identity().cluster, s.identity().shard));
        let frontend = FrontEnd::new(keys.clone(), config.topology.clone(), dyn_net, config.timeout());
        Ok(LocalCluster { net, config, servers, frontend })
    }

    pub fn frontend(&self) -> &FrontEnd {
        &self.frontend
    }

    pub fn query(&self, req: &QueryRequest) -> Result<Vec<EntityId>> {
        self.frontend.query(req)
    }

    pub fn query_traced(&self, req: &QueryRequest) -> Result<QueryOutcome> {
        self.frontend.query_traced(req)
    }

    pub fn shards(&self) -> usize {
        self.config.topology.shards()
    }

    pub fn server(&self, cluster: u8, shard: usize) -> &IndexServer {
        &self.servers[cluster as usize * self.shards() + shard]
    }

    pub fn servers(&self) -> &[IndexServer] {
        &self.servers
    }

    /// Makes one server unreachable for new connections.
    pub fn take_down(&self, cluster: u8, shard: usize) {
        self.net.take_down(self.config.topology.addr(cluster, shard));
    }

    /// Sum of the OXT exponentiation counters of one cluster.
    pub fn exponentiations(&self, cluster: u8) -> u64 {
        (0..self.shards()).map(|j| self.server(cluster, j).counters().exponentiations()).sum()
    }

    pub fn reset_counters(&self) {
        for s in &self.servers {
            s.counters().reset();
        }
    }

    pub fn transcripts(&self) -> Vec<Transcript> {
        self.servers.iter().filter_map(|s| s.transcript()).collect()
    }

    pub fn shutdown(self) -> Result<()> {
        for s in self.servers {
            s.shutdown()?;
        }
        Ok(())
    }
}
