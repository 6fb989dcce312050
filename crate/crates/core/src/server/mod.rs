//! Index server daemon: one per (cluster, shard).
//!
//! A server holds its encrypted shard, a triple pool and a circuit cache.
//! It never sees key material: everything it needs arrives as tokens from
//! the front-end or shares from its counterpart.

mod config;
mod rendezvous;
mod session;

pub use config::{ClusterConfig, EdbParams, ServerParams, Topology};

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::edb::{load_shard, Manifest, ShardEdb};
use crate::error::{Error, Result};
use crate::gc::CircuitCache;
use crate::mpc::{refill_follower, refill_leader, TriplePool, TripleSource, SCALAR};
use crate::oxt::OxtCounters;
use crate::proto::{Hello, HelloKind};
use crate::transport::{
    send_msg, Channel, Listener, MsgType, Network, RecordingChannel, Transcript, TranscriptLog,
};
use rendezvous::{Inbox, Rendezvous};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ServerIdentity {
    pub cluster: u8,
    pub shard: usize,
}

impl ServerIdentity {
    pub fn is_coordinator(&self) -> bool {
        self.shard == 0
    }

    pub fn name(&self) -> String {
        format!("c{}s{}", self.cluster, self.shard)
    }
}

/// A loaded, read-only shard.
#[derive(Debug)]
pub struct ShardStore {
    pub edb: ShardEdb,
}

impl ShardStore {
    /// Loads and checksums `dir`; a mismatch refuses startup.
    pub fn open(dir: &Path) -> Result<Self> {
        Ok(ShardStore { edb: load_shard(dir)? })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.edb.manifest
    }

    /// Hash over the TSet and XSet bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.edb.tset.to_bytes());
        h.update(self.edb.xset.to_bytes());
        hex::encode(h.finalize())
    }
}

pub(crate) fn fresh_rng() -> ChaCha20Rng {
    ChaCha20Rng::from_entropy()
}

pub(crate) struct Shared {
    pub id: ServerIdentity,
    pub cfg: ClusterConfig,
    pub store: ShardStore,
    pub net: Arc<dyn Network>,
    pub pool: Mutex<TriplePool>,
    pub source: TripleSource,
    pub cache: CircuitCache,
    pub counters: OxtCounters,
    pub rendezvous: Rendezvous,
    pub inbox: Inbox,
    pub log: Option<TranscriptLog>,
    pub shutdown: AtomicBool,
    pub degraded: AtomicBool,
}

impl Shared {
    pub fn timeout(&self) -> Duration {
        self.cfg.timeout()
    }

    fn wrap(&self, ch: Box<dyn Channel>) -> Box<dyn Channel> {
        match &self.log {
            Some(log) => Box::new(RecordingChannel::new(ch, log.clone())),
            None => ch,
        }
    }

    /// Opens a channel to another server and introduces ourselves.
    pub fn dial(&self, cluster: u8, shard: usize, kind: HelloKind, session: u64) -> Result<Box<dyn Channel>> {
        let addr = self.cfg.topology.addr(cluster, shard);
        let mut ch = self.wrap(self.net.dial(addr)?);
        let hello = Hello { kind, cluster: self.id.cluster, shard: self.id.shard as u32 };
        send_msg(&mut *ch, MsgType::Hello, session, hello.encode())?;
        Ok(ch)
    }

    pub fn counterpart(&self) -> u8 {
        1 - self.id.cluster
    }
}

/// A running server. Dropping it stops the accept loop.
pub struct IndexServer {
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl IndexServer {
    /// Starts listening, pre-garbles the standard sort circuits and, on
    /// cluster 0, pre-fills the triple pool with the counterpart. An
    /// unreachable counterpart leaves the server in degraded mode.
    pub fn start(
        cfg: ClusterConfig,
        cluster: u8,
        shard: usize,
        store: ShardStore,
        net: Arc<dyn Network>,
    ) -> Result<IndexServer> {
        cfg.validate()?;
        let id = ServerIdentity { cluster, shard };
        let m = store.manifest();
        if cluster > 1 || shard >= cfg.topology.shards() {
            return Err(Error::Config(format!("{} is not in the topology", id.name())));
        }
        if m.cluster != cluster || m.shard != shard || m.config.shards != cfg.topology.shards() {
            return Err(Error::Config(format!(
                "shard files are for c{}s{} of {} shards, server is {} of {}",
                m.cluster,
                m.shard,
                m.config.shards,
                id.name(),
                cfg.topology.shards()
            )));
        }
        let listener = net.listen(cfg.topology.addr(cluster, shard))?;
        let shared = Arc::new(Shared {
            id,
            source: cfg.triple_source()?,
            pool: Mutex::new(TriplePool::new(cluster, cfg.pool.clone())),
            log: cfg.server.record.then(TranscriptLog::default),
            cfg,
            store,
            net,
            cache: CircuitCache::new(),
            counters: OxtCounters::default(),
            rendezvous: Rendezvous::default(),
            inbox: Inbox::default(),
            shutdown: AtomicBool::new(false),
            degraded: AtomicBool::new(false),
        });
        if cluster == 0 {
            shared.cache.precompute(&shared.cfg.server.precompute, &mut fresh_rng())?;
        }
        let mut threads = Vec::new();
        let s = shared.clone();
        threads.push(std::thread::spawn(move || accept_loop(s, listener)));
        if cluster == 0 {
            if let Err(e) = refill_once(&shared) {
                log::warn!("{}: counterpart unavailable at startup, degraded mode: {e}", id.name());
                shared.degraded.store(true, Ordering::SeqCst);
            }
            let s = shared.clone();
            threads.push(std::thread::spawn(move || refill_loop(s)));
        }
        log::info!("{} ready: {} tuples, {} xset elements", id.name(), m_tuples(&shared), shared.store.manifest().xset_elements);
        Ok(IndexServer { shared, threads })
    }

    pub fn identity(&self) -> ServerIdentity {
        self.shared.id
    }

    pub fn store(&self) -> &ShardStore {
        &self.shared.store
    }

    pub fn counters(&self) -> &OxtCounters {
        &self.shared.counters
    }

    pub fn is_degraded(&self) -> bool {
        self.shared.degraded.load(Ordering::SeqCst)
    }

    pub fn triples_available(&self) -> usize {
        self.shared.pool.lock().unwrap().available(SCALAR)
    }

    pub fn circuit_cache(&self) -> &CircuitCache {
        &self.shared.cache
    }

    /// Frames recorded so far, when recording is on.
    pub fn transcript(&self) -> Option<Transcript> {
        let log = self.shared.log.as_ref()?;
        Some(Transcript { server: self.shared.id.name(), entries: log.lock().unwrap().clone() })
    }

    /// Stops the server and writes its transcript if configured.
    pub fn shutdown(mut self) -> Result<()> {
        self.stop();
        if let (Some(dir), Some(t)) = (&self.shared.cfg.server.transcript_dir, self.transcript()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
            t.write(&dir.join(format!("{}.bin", t.server)))?;
        }
        Ok(())
    }

    fn stop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for IndexServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn m_tuples(s: &Shared) -> u64 {
    s.store.manifest().tuples
}

fn accept_loop(shared: Arc<Shared>, listener: Box<dyn Listener>) {
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept_timeout(Duration::from_millis(50)) {
            Ok(Some(ch)) => {
                let s = shared.clone();
                std::thread::spawn(move || {
                    let ch = s.wrap(ch);
                    if let Err(e) = handle_connection(&s, ch) {
                        log::warn!("{}: {e}", s.id.name());
                    }
                });
            }
            Ok(None) => {}
            Err(e) => {
                log::error!("{}: listener failed: {e}", shared.id.name());
                return;
            }
        }
    }
}

fn handle_connection(s: &Arc<Shared>, mut ch: Box<dyn Channel>) -> Result<()> {
    let f = ch.recv_timeout(s.timeout())?;
    if f.msg_type != MsgType::Hello {
        return Err(Error::protocol(format!("connection opened with {:?}", f.msg_type)));
    }
    let hello = Hello::decode(&f.payload)?;
    match hello.kind {
        HelloKind::FrontEnd => session::front_end(s, ch, f.session),
        HelloKind::Counterpart | HelloKind::Global => {
            s.rendezvous.deposit(f.session, hello.kind, ch);
            Ok(())
        }
        HelloKind::Forward => {
            let fwd = ch.recv_timeout(s.timeout())?;
            s.inbox.deposit(fwd.session, hello.shard as usize, fwd.msg_type, fwd.payload);
            Ok(())
        }
        HelloKind::Refill => {
            let mut rng = fresh_rng();
            loop {
                let init = match ch.recv() {
                    Ok(f) => f,
                    Err(crate::transport::TransportError::Closed) => return Ok(()),
                    Err(e) => return Err(e.into()),
                };
                if init.msg_type != MsgType::TripleGenInit {
                    return Err(Error::protocol(format!("refill channel got {:?}", init.msg_type)));
                }
                refill_follower(&s.pool, &s.source, &init.payload, &mut *ch, init.session, &mut rng)?;
            }
        }
        HelloKind::Ping => {
            let me = Hello { kind: HelloKind::Ping, cluster: s.id.cluster, shard: s.id.shard as u32 };
            send_msg(&mut *ch, MsgType::Hello, f.session, me.encode())?;
            Ok(())
        }
    }
}

/// Tops the scalar pool up to its target over a dedicated channel.
fn refill_once(s: &Shared) -> Result<()> {
    let need = s.pool.lock().unwrap().deficit(SCALAR);
    let mut ch = s.dial(s.counterpart(), s.id.shard, HelloKind::Refill, 0)?;
    if need > 0 {
        refill_leader(&s.pool, &s.source, SCALAR, need, &mut *ch, 0, &mut fresh_rng())?;
    }
    Ok(())
}

fn refill_loop(s: Arc<Shared>) {
    let tick = Duration::from_millis(s.cfg.server.refill_interval_ms.max(10));
    while !s.shutdown.load(Ordering::SeqCst) {
        std::thread::sleep(tick);
        let low = {
            let p = s.pool.lock().unwrap();
            let target = p.config().target(SCALAR);
            (p.available(SCALAR) as f64) < p.config().refill_below * target as f64
        };
        if low || s.degraded.load(Ordering::SeqCst) {
            match refill_once(&s) {
                Ok(()) => {
                    if s.degraded.swap(false, Ordering::SeqCst) {
                        log::info!("{}: counterpart reachable again", s.id.name());
                    }
                }
                Err(e) => {
                    if !s.degraded.swap(true, Ordering::SeqCst) {
                        log::warn!("{}: background refill failed, degraded mode: {e}", s.id.name());
                    }
                }
            }
        }
    }
}

/// Checks that `addr` answers a ping.
pub fn ping(net: &dyn Network, addr: &str, timeout: Duration) -> Result<Hello> {
    let mut ch = net.dial(addr)?;
    let me = Hello { kind: HelloKind::Ping, cluster: 0xff, shard: 0 };
    send_msg(&mut *ch, MsgType::Hello, 0, me.encode())?;
    let f = ch.recv_timeout(timeout)?;
    if f.msg_type != MsgType::Hello {
        return Err(Error::protocol(format!("ping answered with {:?}", f.msg_type)));
    }
    Hello::decode(&f.payload)
}

#[cfg(test)]
mod tests;
