use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::Args;

use encgraph::crypto::MasterKeyBundle;
use encgraph::edb::load_shard;
use encgraph::edb::shard_dir;
use encgraph::frontend::{FrontEnd, LocalCluster};
use encgraph::graph::EntityId;
use encgraph::transport::TcpNetwork;
use encgraph::{Error, Result};

use super::layout::{edb_root, load_config, read_json, write_json, Dataset, QuerySpec, Workload, DATASET_FILE, KEYS_FILE, WORKLOAD_FILE};

#[derive(Args, Debug)]
pub struct QueryArgs {
    /// S-expression, e.g. "(and friend:1 friend:2)". Omit with --batch.
    pub sexpr: Option<String>,
    /// Directory written by setup.
    #[arg(long)]
    pub dir: PathBuf,
    /// Defaults to the keystore in --dir.
    #[arg(long)]
    pub keystore: Option<PathBuf>,
    /// Run every party in this process instead of dialling the topology.
    #[arg(long)]
    pub local: bool,
    #[arg(long)]
    pub sort: bool,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Score formula over key, src and constants, e.g. "(* key src)".
    #[arg(long)]
    pub score: Option<String>,
    /// Sort the inner apply round.
    #[arg(long)]
    pub nested_sort: bool,
    #[arg(long)]
    pub nested_top_k: Option<usize>,
    /// Outer apply template, default "(or ?)".
    #[arg(long)]
    pub template: Option<String>,
    /// `term=weight` src value for score formulas; repeatable.
    #[arg(long = "weight", value_parser = parse_weight)]
    pub weights: Vec<(String, u32)>,
    /// Print `rank<TAB>id`.
    #[arg(long)]
    pub rank: bool,
    /// One s-expression per line; flags apply to every line.
    #[arg(long)]
    pub batch: Option<PathBuf>,
    /// With --local: record transcripts into this directory.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
}

fn parse_weight(s: &str) -> std::result::Result<(String, u32), String> {
    let (t, w) = s.rsplit_once('=').ok_or("expected term=weight")?;
    Ok((t.to_string(), w.parse().map_err(|_| format!("invalid weight '{w}'"))?))
}

impl QueryArgs {
    fn specs(&self) -> Result<Vec<QuerySpec>> {
        let texts: Vec<String> = match (&self.sexpr, &self.batch) {
            (Some(s), None) => vec![s.clone()],
            (None, Some(p)) => {
                let f = std::fs::File::open(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                std::io::BufReader::new(f)
                    .lines()
                    .map(|l| l.map_err(|e| Error::Config(format!("{}: {e}", p.display()))))
                    .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty() && !l.trim_start().starts_with('#')))
                    .collect::<Result<_>>()?
            }
            _ => return Err(Error::Config("give exactly one of an s-expression or --batch".into())),
        };
        Ok(texts
            .into_iter()
            .map(|sexpr| QuerySpec {
                sexpr: sexpr.trim().to_string(),
                sort: self.sort,
                top_k: self.top_k,
                score: self.score.clone(),
                nested_sort: self.nested_sort,
                nested_top_k: self.nested_top_k,
                template: self.template.clone(),
                weights: self.weights.clone(),
            })
            .collect())
    }
}

fn print_ids(out: &mut impl Write, ids: &[EntityId], rank: bool) -> std::io::Result<()> {
    for (i, id) in ids.iter().enumerate() {
        if rank {
            writeln!(out, "{}\t{id}", i + 1)?;
        } else {
            writeln!(out, "{id}")?;
        }
    }
    Ok(())
}

pub fn run(args: QueryArgs, config: Option<PathBuf>) -> Result<()> {
    let specs = args.specs()?;
    // Parse everything before touching keys or the network.
    let requests = specs.iter().map(QuerySpec::request).collect::<Result<Vec<_>>>()?;
    let mut cfg = load_config(config.as_deref(), &args.dir)?;
    if let Some(t) = args.timeout_ms {
        cfg.server.timeout_ms = t;
    }
    let keys = MasterKeyBundle::read_keystore(&args.keystore.clone().unwrap_or_else(|| args.dir.join(KEYS_FILE)))?;
    if args.record.is_some() && !args.local {
        return Err(Error::Config("--record needs --local".into()));
    }
    let batch = args.batch.is_some();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let io = |e: std::io::Error| Error::Config(format!("writing output: {e}"));

    let mut emit = |spec: &QuerySpec, ids: &[EntityId]| -> Result<()> {
        if batch {
            writeln!(out, "# {}", spec.sexpr).map_err(io)?;
        }
        print_ids(&mut out, ids, args.rank).map_err(io)
    };

    if args.local {
        if let Some(dir) = &args.record {
            cfg.server.record = true;
            cfg.server.transcript_dir = Some(dir.clone());
        }
        let root = edb_root(&args.dir);
        let lc = LocalCluster::open(&root, &keys, cfg)?;
        let mut failed = None;
        for (spec, req) in specs.iter().zip(&requests) {
            match lc.query(req) {
                Ok(ids) => emit(spec, &ids)?,
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        lc.shutdown()?;
        if let Some(dir) = &args.record {
            let partition = load_shard(&shard_dir(&root, 0, 0))?.manifest.config;
            let dataset: Dataset = read_json(&args.dir.join(DATASET_FILE))?;
            write_json(&dir.join(WORKLOAD_FILE), &Workload { dataset, partition, queries: specs.clone() })?;
        }
        return failed.map_or(Ok(()), Err);
    }

    let timeout = Duration::from_millis(cfg.server.timeout_ms);
    let fe = FrontEnd::new(keys, cfg.topology.clone(), TcpNetwork::new(), timeout);
    for (spec, req) in specs.iter().zip(&requests) {
        emit(spec, &fe.query(req)?)?;
    }
    Ok(())
}
