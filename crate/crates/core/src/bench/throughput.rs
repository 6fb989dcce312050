use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{ratio, HardwareContext, Latency, Mode};
use crate::crypto::MasterKeyBundle;
use crate::edb::build_edb;
use crate::error::{Error, Result};
use crate::frontend::LocalCluster;
use crate::graph::{build_inverted_index, random_graph, random_query, PlainEngine, SynthConfig};
use crate::planner::{Filter, QueryRequest};
use crate::server::ClusterConfig;
use crate::transport::Network;

/// Published throughput drop caused by local sorting, as fractions.
pub const REFERENCE_SORT_DROP: (f64, f64) = (0.38, 0.49);
/// Published global-sort throughput constant in queries per second.
pub const REFERENCE_GLOBAL_SORT_QPS: f64 = 80.0;

pub const OPERATORS: [&str; 5] = ["term", "and", "or", "difference", "apply"];

#[derive(Clone, Debug)]
pub struct ThroughputConfig {
    pub nodes: u64,
    pub edges: usize,
    pub shards: usize,
    /// Concurrent client sessions.
    pub clients: usize,
    /// Queries per (operator, sorted) cell.
    pub queries: usize,
    pub top_k: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for ThroughputConfig {
    fn default() -> Self {
        ThroughputConfig { nodes: 1000, edges: 10_000, shards: 2, clients: 100, queries: 200, top_k: 10, seed: 4, mode: Mode::Both }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OpRow {
    pub operator: String,
    pub sorted: bool,
    pub queries: usize,
    pub encrypted_qps: Option<f64>,
    pub baseline_qps: Option<f64>,
    /// Encrypted over baseline throughput.
    pub ratio: Option<f64>,
    pub encrypted: Option<Latency>,
    pub baseline: Option<Latency>,
    pub bytes_per_query: u64,
    pub exponentiations_per_query: f64,
    pub errors: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThroughputReport {
    pub nodes: u64,
    pub edges: usize,
    pub shards: usize,
    pub clients: usize,
    pub rows: Vec<OpRow>,
    /// Per operator, `1 - sorted/unsorted` encrypted throughput.
    pub sort_drop: Vec<(String, f64)>,
    pub reference_sort_drop: (f64, f64),
    pub reference_global_sort_qps: f64,
    pub hardware: HardwareContext,
}

impl ThroughputReport {
    pub fn row(&self, op: &str, sorted: bool) -> Option<&OpRow> {
        self.rows.iter().find(|r| r.operator == op && r.sorted == sorted)
    }
}

struct Run {
    wall: Duration,
    latencies: Vec<Duration>,
    errors: usize,
}

/// Drains `queries` with `clients` threads.
fn drive<F>(queries: &[QueryRequest], clients: usize, f: F) -> Run
where
    F: Fn(&QueryRequest) -> Result<()> + Sync,
{
    let next = AtomicUsize::new(0);
    let lat = Mutex::new(Vec::with_capacity(queries.len()));
    let errors = AtomicUsize::new(0);
    let t = Instant::now();
    std::thread::scope(|s| {
        for _ in 0..clients.clamp(1, queries.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(q) = queries.get(i) else { break };
                let t = Instant::now();
                if let Err(e) = f(q) {
                    log::warn!("query {i} failed: {e}");
                    errors.fetch_add(1, Ordering::Relaxed);
                }
                lat.lock().unwrap().push(t.elapsed());
            });
        }
    });
    Run { wall: t.elapsed(), latencies: lat.into_inner().unwrap(), errors: errors.into_inner() }
}

fn workload(cfg: &ThroughputConfig, op: usize, sorted: bool) -> Result<Vec<QueryRequest>> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ (op as u64 * 31 + u64::from(sorted)));
    (0..cfg.queries)
        .map(|_| {
            let mut q = QueryRequest::parse(&random_query(&mut rng, cfg.nodes, "friend", op))?;
            if sorted {
                q = q.filter(Filter::top_k(cfg.top_k));
                if op == 4 {
                    q = q.nested(Filter::top_k(cfg.top_k));
                }
            }
            Ok(q)
        })
        .collect()
}

pub fn throughput_suite(cfg: &ThroughputConfig) -> Result<ThroughputReport> {
    let g = random_graph(&SynthConfig::new(cfg.nodes, cfg.edges, cfg.seed));
    let index = build_inverted_index(&g);
    let plain = PlainEngine::new(&index);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let keys = MasterKeyBundle::generate(&mut rng);
    let mut cc = ClusterConfig::local(cfg.shards);
    cc.server.precompute = Vec::new();
    cc.pool.scalar = 64;
    cc.server.timeout_ms = 120_000;
    let lc = cfg
        .mode
        .encrypted()
        .then(|| LocalCluster::start(&build_edb(&index, &keys, &cc.partition(), cfg.seed)?, &keys, cc.clone()))
        .transpose()?;

    let mut rows = Vec::new();
    for sorted in [false, true] {
        for (op, name) in OPERATORS.iter().enumerate() {
            let qs = workload(cfg, op, sorted)?;
            let mut row = OpRow {
                operator: name.to_string(),
                sorted,
                queries: qs.len(),
                encrypted_qps: None,
                baseline_qps: None,
                ratio: None,
                encrypted: None,
                baseline: None,
                bytes_per_query: 0,
                exponentiations_per_query: 0.0,
                errors: 0,
            };
            if cfg.mode.baseline() {
                let run = drive(&qs, cfg.clients, |q| plain.query(q).map(|r| drop(std::hint::black_box(r))));
                row.baseline_qps = Some(qs.len() as f64 / run.wall.as_secs_f64());
                row.baseline = Some(Latency::from_samples(&run.latencies));
                row.errors += run.errors;
            }
            if let Some(lc) = &lc {
                lc.reset_counters();
                let before = lc.net.counters().snapshot().bytes_sent;
                let run = drive(&qs, cfg.clients, |q| lc.query(q).map(drop));
                row.encrypted_qps = Some(qs.len() as f64 / run.wall.as_secs_f64());
                row.encrypted = Some(Latency::from_samples(&run.latencies));
                row.errors += run.errors;
                let n = qs.len().max(1) as u64;
                row.bytes_per_query = (lc.net.counters().snapshot().bytes_sent - before) / n;
                row.exponentiations_per_query = (lc.exponentiations(0) + lc.exponentiations(1)) as f64 / n as f64;
            }
            row.ratio = row.encrypted_qps.zip(row.baseline_qps).and_then(|(e, b)| ratio(e, b));
            rows.push(row);
        }
    }
    if let Some(lc) = lc {
        lc.shutdown()?;
    }
    let mut sort_drop = Vec::new();
    for name in OPERATORS {
        let qps = |s: bool| rows.iter().find(|r| r.operator == name && r.sorted == s).and_then(|r| r.encrypted_qps);
        if let (Some(u), Some(s)) = (qps(false), qps(true)) {
            sort_drop.push((name.to_string(), 1.0 - s / u));
        }
    }
    if rows.iter().any(|r| r.errors > 0) {
        let failed: usize = rows.iter().map(|r| r.errors).sum();
        return Err(Error::Protocol(format!("{failed} bench queries failed")));
    }
    Ok(ThroughputReport {
        nodes: cfg.nodes,
        edges: cfg.edges,
        shards: cfg.shards,
        clients: cfg.clients,
        rows,
        sort_drop,
        reference_sort_drop: REFERENCE_SORT_DROP,
        reference_global_sort_qps: REFERENCE_GLOBAL_SORT_QPS,
        hardware: HardwareContext::current(),
    })
}

impl fmt::Display for ThroughputReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
        writeln!(
            f,
            "throughput suite: {} nodes, {} edges, {} shards, {} concurrent clients",
            self.nodes, self.edges, self.shards, self.clients
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "  {:<10} {:<8} encrypted {:>9} q/s  baseline {:>11} q/s  ratio {:>8}  p50 {}us  bytes/q {}  exps/q {:.1}",
                r.operator,
                if r.sorted { "top-k" } else { "unsorted" },
                opt(r.encrypted_qps),
                opt(r.baseline_qps),
                r.ratio.map_or("-".into(), |x| format!("{x:.5}")),
                r.encrypted.as_ref().map_or("-".into(), |l| format!("{:.0}", l.p50_us)),
                r.bytes_per_query,
                r.exponentiations_per_query,
            )?;
        }
        for (op, d) in &self.sort_drop {
            writeln!(f, "  sorting changes {op} throughput by {:.1}%", -d * 100.0)?;
        }
        writeln!(
            f,
            "  reference: local sorting lowers throughput by {:.0}% to {:.0}%; global sorting sustains about {:.0} q/s",
            self.reference_sort_drop.0 * 100.0,
            self.reference_sort_drop.1 * 100.0,
            self.reference_global_sort_qps
        )?;
        writeln!(f, "  {}", self.hardware)
    }
}
