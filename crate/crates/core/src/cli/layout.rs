//! Files written by `setup` and read by the other commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use encgraph::edb::PartitionConfig;
use encgraph::graph::{build_inverted_index, load_edge_list, InvertedIndex, WeightPolicy};
use encgraph::planner::{parse_template, Filter, QueryRequest, ScoreFormula};
use encgraph::server::ClusterConfig;
use encgraph::{Error, Result};

pub const CONFIG_FILE: &str = "cluster.toml";
pub const KEYS_FILE: &str = "keystore.bin";
pub const DATASET_FILE: &str = "dataset.json";
pub const WORKLOAD_FILE: &str = "workload.json";

pub fn edb_root(dir: &Path) -> PathBuf {
    dir.join("edb")
}

/// The explicit config path, else the one setup wrote into `dir`.
pub fn load_config(explicit: Option<&Path>, dir: &Path) -> Result<ClusterConfig> {
    ClusterConfig::load(&explicit.map_or_else(|| dir.join(CONFIG_FILE), Path::to_path_buf))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).expect("serialisable");
    std::fs::write(path, text).map_err(|e| Error::Config(format!("writing {}: {e}", path.display())))
}

/// Where the plaintext graph came from, so the audit can recompute leakage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    pub edges: PathBuf,
    pub edge_type: String,
    pub random_weights: Option<u64>,
}

impl Dataset {
    pub fn policy(&self) -> WeightPolicy {
        self.random_weights.map_or(WeightPolicy::FromFile, |seed| WeightPolicy::UniformRandom { seed })
    }

    pub fn index(&self) -> Result<InvertedIndex> {
        Ok(build_inverted_index(&load_edge_list(&self.edges, &self.edge_type, self.policy())?))
    }
}

/// One query with its flags, as given on the command line.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct QuerySpec {
    pub sexpr: String,
    pub sort: bool,
    pub top_k: Option<usize>,
    pub score: Option<String>,
    pub nested_sort: bool,
    pub nested_top_k: Option<usize>,
    pub template: Option<String>,
    pub weights: Vec<(String, u32)>,
}

fn filter(sort: bool, top_k: Option<usize>, score: Option<&str>) -> Result<Filter> {
    let mut f = Filter { sort, top_k, formula: None };
    if let Some(s) = score {
        f = f.with_formula(ScoreFormula::parse(s)?);
    }
    Ok(f)
}

impl QuerySpec {
    pub fn request(&self) -> Result<QueryRequest> {
        let mut q = QueryRequest::parse(&self.sexpr)?
            .filter(filter(self.sort, self.top_k, self.score.as_deref())?)
            .nested(filter(self.nested_sort, self.nested_top_k, None)?);
        if let Some(t) = &self.template {
            q.template = parse_template(t)?;
        }
        for (term, w) in &self.weights {
            q.weights.insert(term.parse()?, *w);
        }
        Ok(q)
    }
}

/// Written next to recorded transcripts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Workload {
    pub dataset: Dataset,
    pub partition: PartitionConfig,
    pub queries: Vec<QuerySpec>,
}
