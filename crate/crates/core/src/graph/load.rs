use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::model::{valid_edge_type, Edge, EntityId, MAX_SORT_KEY, MIN_SORT_KEY};
use crate::error::{Error, IoContext, Result};

/// Where edge weights come from when loading an edge list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightPolicy {
    /// Third column of each line.
    FromFile,
    /// Uniform in [1, 100], drawn from a seeded generator.
    UniformRandom { seed: u64 },
}

/// Directed, edge-labelled graph. Immutable once loaded.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    edges: Vec<Edge>,
    seen: HashSet<(u64, u64, String)>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an edge unless an edge with the same (src, dst, type) exists.
    /// Returns whether it was inserted.
    pub fn add_edge(&mut self, edge: Edge) -> bool {
        let key = (edge.src.0, edge.dst.0, edge.edge_type.clone());
        if !self.seen.insert(key) {
            return false;
        }
        self.edges.push(edge);
        true
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn merge(&mut self, other: Graph) {
        for e in other.edges {
            self.add_edge(e);
        }
    }

    pub fn has_edge(&self, src: EntityId, dst: EntityId, edge_type: &str) -> bool {
        self.seen.contains(&(src.0, dst.0, edge_type.to_string()))
    }
}

pub fn load_edge_list(path: &Path, edge_type: &str, policy: WeightPolicy) -> Result<Graph> {
    let file = File::open(path).io_context(|| format!("opening {}", path.display()))?;
    let mut graph = Graph::new();
    parse_edge_list(BufReader::new(file), edge_type, policy, &mut graph)?;
    Ok(graph)
}

/// Reads `src dst [weight]` lines into `graph`. Blank lines and `#` comments are skipped.
pub fn parse_edge_list<R: BufRead>(
    reader: R,
    edge_type: &str,
    policy: WeightPolicy,
    graph: &mut Graph,
) -> Result<()> {
    if !valid_edge_type(edge_type) {
        return Err(Error::Config(format!("invalid edge type '{edge_type}'")));
    }
    let mut rng = match policy {
        WeightPolicy::UniformRandom { seed } => Some(ChaCha20Rng::seed_from_u64(seed)),
        WeightPolicy::FromFile => None,
    };
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.io_context(|| format!("reading line {lineno}"))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |message: String| Error::MalformedLine { line: lineno, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(malformed(format!("expected 'src dst [weight]', got '{line}'")));
        }
        let parse_id = |s: &str| {
            s.parse::<u64>()
                .map(EntityId)
                .map_err(|_| malformed(format!("invalid id '{s}'")))
        };
        let src = parse_id(fields[0])?;
        let dst = parse_id(fields[1])?;
        let sort_key = match rng.as_mut() {
            Some(rng) => rng.gen_range(MIN_SORT_KEY..=MAX_SORT_KEY),
            None => {
                let w = fields
                    .get(2)
                    .ok_or_else(|| malformed("missing weight column".into()))?;
                let w: u32 = w.parse().map_err(|_| malformed(format!("invalid weight '{w}'")))?;
                if !(MIN_SORT_KEY..=MAX_SORT_KEY).contains(&w) {
                    return Err(malformed(format!("weight {w} outside [1, 100]")));
                }
                w
            }
        };
        let inserted = graph.add_edge(Edge {
            src,
            dst,
            edge_type: edge_type.to_string(),
            sort_key,
        });
        if !inserted {
            log::warn!("line {lineno}: duplicate edge {src} -> {dst} ({edge_type}), keeping first");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, policy: WeightPolicy) -> Result<Graph> {
        let mut g = Graph::new();
        parse_edge_list(text.as_bytes(), "friend", policy, &mut g)?;
        Ok(g)
    }

    #[test]
    fn three_lines() {
        let g = load("1 2 10\n1 3 20\n2 3 30\n", WeightPolicy::FromFile).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert!(g.has_edge(EntityId(1), EntityId(3), "friend"));
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = load("1 2 5\n1 x 5\n", WeightPolicy::FromFile).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 2, .. }), "{err}");
        let err = load("1 2 500\n", WeightPolicy::FromFile).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn duplicates_keep_first() {
        let g = load("1 2 5\n1 2 9\n", WeightPolicy::FromFile).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges()[0].sort_key, 5);
    }

    #[test]
    fn seeded_weights_are_reproducible() {
        let text = "# comment\n1 2\n1 3\n\n2 3\n";
        let a = load(text, WeightPolicy::UniformRandom { seed: 7 }).unwrap();
        let b = load(text, WeightPolicy::UniformRandom { seed: 7 }).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert!(a.edges().iter().all(|e| (1..=100).contains(&e.sort_key)));
    }
}
