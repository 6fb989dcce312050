use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::load::Graph;
use super::model::{Edge, EntityId, MAX_SORT_KEY, MIN_SORT_KEY};

/// Parameters for a reproducible random social graph.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub nodes: u64,
    pub edges: usize,
    pub edge_types: Vec<String>,
    pub seed: u64,
    /// Draw weights without replacement per source so no posting list has ties.
    /// Requires out-degree <= 100.
    pub distinct_weights: bool,
    /// Added to every node id; lets tests plant recognisable bit patterns.
    pub id_offset: u64,
}

impl SynthConfig {
    pub fn new(nodes: u64, edges: usize, seed: u64) -> Self {
        SynthConfig {
            nodes,
            edges,
            edge_types: vec!["friend".into()],
            seed,
            distinct_weights: false,
            id_offset: 0,
        }
    }
}

/// Uniform random directed graph without self loops or duplicate edges.
pub fn random_graph(cfg: &SynthConfig) -> Graph {
    assert!(cfg.nodes >= 2, "need at least two nodes");
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut graph = Graph::new();
    let max_edges = (cfg.nodes * (cfg.nodes - 1)) as usize * cfg.edge_types.len();
    let target = cfg.edges.min(max_edges);
    let mut used_weights: std::collections::HashMap<(u64, usize), Vec<u32>> = Default::default();
    let mut attempts = 0usize;
    while graph.edge_count() < target && attempts < target * 50 + 1000 {
        attempts += 1;
        let src = rng.gen_range(0..cfg.nodes);
        let dst = rng.gen_range(0..cfg.nodes);
        if src == dst {
            continue;
        }
        let ty = rng.gen_range(0..cfg.edge_types.len());
        let edge_type = &cfg.edge_types[ty];
        let (src, dst) = (EntityId(src + cfg.id_offset), EntityId(dst + cfg.id_offset));
        if graph.has_edge(src, dst, edge_type) {
            continue;
        }
        let sort_key = if cfg.distinct_weights {
            let pool = used_weights.entry((src.0, ty)).or_insert_with(|| {
                let mut w: Vec<u32> = (MIN_SORT_KEY..=MAX_SORT_KEY).collect();
                w.shuffle(&mut rng);
                w
            });
            match pool.pop() {
                Some(w) => w,
                None => continue,
            }
        } else {
            rng.gen_range(MIN_SORT_KEY..=MAX_SORT_KEY)
        };
        graph.add_edge(Edge {
            src,
            dst,
            edge_type: edge_type.clone(),
            sort_key,
        });
    }
    graph
}

/// Random query text over `edge_type:0..nodes` with the operator chosen
/// by `op % 5`: term, and, or, difference, apply.
pub fn random_query<R: Rng>(rng: &mut R, nodes: u64, edge_type: &str, op: usize) -> String {
    let t = |r: &mut R| format!("{edge_type}:{}", r.gen_range(0..nodes));
    match op % 5 {
        0 => format!("(term {})", t(rng)),
        1 => format!("(and {} {})", t(rng), t(rng)),
        2 => {
            let n = rng.gen_range(2..=4);
            let terms: Vec<String> = (0..n).map(|_| t(rng)).collect();
            format!("(or {})", terms.join(" "))
        }
        3 => format!("(difference {} (and {} {}))", t(rng), t(rng), t(rng)),
        _ => format!("(apply {edge_type}: {})", t(rng)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_inverted_index;

    #[test]
    fn reproducible_and_sized() {
        let cfg = SynthConfig::new(200, 2000, 4);
        let a = random_graph(&cfg);
        let b = random_graph(&cfg);
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.edge_count(), 2000);
    }

    #[test]
    fn distinct_weights_have_no_ties() {
        let mut cfg = SynthConfig::new(100, 1500, 8);
        cfg.distinct_weights = true;
        let idx = build_inverted_index(&random_graph(&cfg));
        for list in idx.lists() {
            let mut keys: Vec<u32> = list.entries.iter().map(|p| p.sort_key).collect();
            keys.dedup();
            assert_eq!(keys.len(), list.len());
        }
    }
}
