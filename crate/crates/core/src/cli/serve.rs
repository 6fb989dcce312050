//! One index server process. Only the server's own shard files and the
//! cluster config are opened here.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;

use encgraph::edb::shard_dir;
use encgraph::server::{IndexServer, ShardStore};
use encgraph::transport::TcpNetwork;
use encgraph::Result;

use super::layout::{edb_root, load_config};

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Directory written by setup.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub cluster: u8,
    #[arg(long)]
    pub shard: usize,
}

pub fn run(args: ServeArgs, config: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config.as_deref(), &args.dir)?;
    let store = ShardStore::open(&shard_dir(&edb_root(&args.dir), args.cluster, args.shard))?;
    let topology = cfg.topology.clone();
    let server = IndexServer::start(cfg, args.cluster, args.shard, store, TcpNetwork::new())?;
    let id = server.identity();
    let addr = topology.addr(id.cluster, id.shard);
    println!(
        "ready c{}s{} on {addr} fingerprint {}{}",
        id.cluster,
        id.shard,
        server.store().fingerprint(),
        if server.is_degraded() { " (degraded)" } else { "" }
    );
    std::io::stdout().flush().ok();
    server.wait();
    Ok(())
}
