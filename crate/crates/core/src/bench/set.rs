use std::collections::BTreeSet;
use std::fmt;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{ratio, HardwareContext, Latency, Mode};
use crate::crypto::MasterKeyBundle;
use crate::edb::build_edb;
use crate::error::Result;
use crate::frontend::LocalCluster;
use crate::graph::{build_inverted_index, Edge, EntityId, Graph, PlainEngine};
use crate::planner::QueryRequest;
use crate::server::ClusterConfig;
use crate::transport::Network;

/// First id of the x-term sources; keeps them apart from list members.
const X_BASE: u64 = 1_000_000;

#[derive(Clone, Debug)]
pub struct SetConfig {
    /// Size of the anchor term's posting list.
    pub s_selectivity: usize,
    /// Posting-list sizes of the single x-term.
    pub x_sweep: Vec<usize>,
    /// Conjunctions with 1..=max_xterms x-terms.
    pub max_xterms: usize,
    pub shards: usize,
    pub reps: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for SetConfig {
    fn default() -> Self {
        SetConfig {
            s_selectivity: 130,
            x_sweep: vec![1, 2, 5, 10, 20, 50, 100, 130, 200, 300, 502],
            max_xterms: 5,
            shards: 2,
            reps: 5,
            seed: 1,
            mode: Mode::Both,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub x_selectivity: usize,
    pub xterms: usize,
    pub query: String,
    pub results: usize,
    /// Exponentiations per query, cluster 0 and cluster 1.
    pub exponentiations: [u64; 2],
    /// `|DB(s)| · n` on cluster 0; cluster 1 only joins sorted rounds.
    pub expected: [u64; 2],
    pub bytes_per_query: u64,
    pub matches_baseline: bool,
    pub encrypted: Option<Latency>,
    pub baseline: Option<Latency>,
    pub latency_ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SetReport {
    pub s_selectivity: usize,
    pub x_sweep: Vec<SweepRow>,
    pub xterm_sweep: Vec<SweepRow>,
    /// Every row did exactly the expected exponentiations.
    pub law_holds: bool,
    pub hardware: HardwareContext,
}

/// `friend:0` lists ids `1..=s`; `friend:(X_BASE + v)` lists `1..=v` for
/// every `v` in `sweep`.
pub fn x_selectivity_graph(s: usize, sweep: &[usize]) -> Graph {
    let mut g = Graph::new();
    let edge = |src: u64, dst: u64| Edge {
        src: EntityId(src),
        dst: EntityId(dst),
        edge_type: "friend".into(),
        sort_key: (dst % 100) as u32 + 1,
    };
    for d in 1..=s as u64 {
        g.add_edge(edge(0, d));
    }
    for &v in sweep {
        for d in 1..=v as u64 {
            g.add_edge(edge(X_BASE + v as u64, d));
        }
    }
    g
}

pub fn set_suite(cfg: &SetConfig) -> Result<SetReport> {
    let mut sizes = cfg.x_sweep.clone();
    // The x-term sweep reuses sweep entries; make sure there are enough.
    let mut extra = 1000;
    while sizes.len() < cfg.max_xterms {
        sizes.push(extra);
        extra += 1;
    }
    let g = x_selectivity_graph(cfg.s_selectivity, &sizes);
    let index = build_inverted_index(&g);
    let plain = PlainEngine::new(&index);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let keys = MasterKeyBundle::generate(&mut rng);
    let mut cc = ClusterConfig::local(cfg.shards);
    cc.server.precompute = Vec::new();
    cc.pool.scalar = 64;
    let lc = cfg
        .mode
        .encrypted()
        .then(|| LocalCluster::start(&build_edb(&index, &keys, &cc.partition(), cfg.seed)?, &keys, cc.clone()))
        .transpose()?;

    let row = |xs: &[usize]| -> Result<SweepRow> {
        let terms: Vec<String> = xs.iter().map(|v| format!("friend:{}", X_BASE + *v as u64)).collect();
        let query = format!("(and friend:0 {})", terms.join(" "));
        let req = QueryRequest::parse(&query)?;
        let want: BTreeSet<EntityId> = plain.query(&req)?.iter().map(|s| s.id).collect();
        let mut base = Vec::new();
        if cfg.mode.baseline() {
            for _ in 0..cfg.reps {
                let t = Instant::now();
                std::hint::black_box(plain.query(&req)?);
                base.push(t.elapsed());
            }
        }
        let mut enc: Vec<Duration> = Vec::new();
        let (mut exps, mut bytes, mut ok) = ([0u64; 2], 0, true);
        if let Some(lc) = &lc {
            lc.reset_counters();
            let before = lc.net.counters().snapshot().bytes_sent;
            for _ in 0..cfg.reps {
                let t = Instant::now();
                let got = lc.query(&req)?;
                enc.push(t.elapsed());
                ok &= got.iter().copied().collect::<BTreeSet<_>>() == want;
            }
            let reps = cfg.reps.max(1) as u64;
            exps = [lc.exponentiations(0) / reps, lc.exponentiations(1) / reps];
            bytes = (lc.net.counters().snapshot().bytes_sent - before) / reps;
        }
        let encrypted = lc.is_some().then(|| Latency::from_samples(&enc));
        let baseline = cfg.mode.baseline().then(|| Latency::from_samples(&base));
        let latency_ratio = match (&encrypted, &baseline) {
            (Some(e), Some(b)) => ratio(e.mean_us, b.mean_us),
            _ => None,
        };
        Ok(SweepRow {
            x_selectivity: xs[0],
            xterms: xs.len(),
            query,
            results: want.len(),
            exponentiations: exps,
            expected: [(cfg.s_selectivity * xs.len()) as u64, 0],
            bytes_per_query: bytes,
            matches_baseline: ok,
            encrypted,
            baseline,
            latency_ratio,
        })
    };

    let x_sweep = cfg.x_sweep.iter().map(|v| row(&[*v])).collect::<Result<Vec<_>>>()?;
    let xterm_sweep = (1..=cfg.max_xterms).map(|n| row(&sizes[..n])).collect::<Result<Vec<_>>>()?;
    let law_holds = lc.is_none()
        || x_sweep.iter().chain(&xterm_sweep).all(|r| r.exponentiations == r.expected);
    if let Some(lc) = lc {
        lc.shutdown()?;
    }
    Ok(SetReport { s_selectivity: cfg.s_selectivity, x_sweep, xterm_sweep, law_holds, hardware: HardwareContext::current() })
}

fn write_rows(f: &mut fmt::Formatter<'_>, rows: &[SweepRow]) -> fmt::Result {
    for r in rows {
        write!(
            f,
            "  |DB(x)|={:<4} n={} results={:<4} exps c0={} c1={} expected {}/{} bytes/q={}",
            r.x_selectivity,
            r.xterms,
            r.results,
            r.exponentiations[0],
            r.exponentiations[1],
            r.expected[0],
            r.expected[1],
            r.bytes_per_query
        )?;
        if let Some(e) = &r.encrypted {
            write!(f, " enc {:.1}us", e.mean_us)?;
        }
        if let Some(b) = &r.baseline {
            write!(f, " base {:.1}us", b.mean_us)?;
        }
        if let Some(x) = r.latency_ratio {
            write!(f, " ratio {x:.1}x")?;
        }
        if !r.matches_baseline {
            write!(f, " MISMATCH")?;
        }
        writeln!(f)?;
    }
    Ok(())
}

impl fmt::Display for SetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "set suite: |DB(s)| = {}", self.s_selectivity)?;
        writeln!(f, " x-selectivity sweep (one x-term):")?;
        write_rows(f, &self.x_sweep)?;
        writeln!(f, " x-term count sweep:")?;
        write_rows(f, &self.xterm_sweep)?;
        writeln!(f, " exponentiation law |DB(s)| * n: {}", if self.law_holds { "holds" } else { "VIOLATED" })?;
        writeln!(f, " {}", self.hardware)
    }
}
