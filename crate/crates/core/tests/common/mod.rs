//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use encgraph::graph::{EntityId, Graph, ScoredId};
use encgraph::server::ClusterConfig;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_encgraph")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn encgraph")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `src dst weight` per line.
pub fn write_edges(graph: &Graph, path: &Path) {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    for e in graph.edges() {
        writeln!(f, "{} {} {}", e.src.0, e.dst.0, e.sort_key).unwrap();
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn join(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Ids printed one per line.
pub fn parse_ids(text: &str) -> Vec<u64> {
    text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).map(|l| l.trim().parse().unwrap()).collect()
}

/// Cheap cluster for tests: no pre-garbling, small scalar pool.
pub fn test_config(shards: usize) -> ClusterConfig {
    let mut c = ClusterConfig::local(shards);
    c.server.precompute = Vec::new();
    c.server.timeout_ms = 120_000;
    c.pool.scalar = 64;
    c
}

/// Ranked output agrees with the oracle up to ties: same length, no
/// duplicates, and the id at each position carries the oracle's score there.
pub fn ranked_matches(got: &[EntityId], want: &[ScoredId], all: &[ScoredId]) -> bool {
    let score: BTreeMap<EntityId, u32> = all.iter().map(|s| (s.id, s.score)).collect();
    got.len() == want.len()
        && got.iter().collect::<BTreeSet<_>>().len() == got.len()
        && got.iter().zip(want).all(|(g, w)| score.get(g) == Some(&w.score))
}
