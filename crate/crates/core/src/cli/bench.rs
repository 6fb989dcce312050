use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::{json, Map, Value};

use encgraph::bench::{
    arith_suite, set_suite, sort_suite, throughput_suite, ArithConfig, Mode, SetConfig, SortConfig, ThroughputConfig,
};
use encgraph::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Set,
    Arith,
    Sort,
    Throughput,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Encrypted,
    Baseline,
    Both,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ModeArg,
    /// Write machine-readable metrics here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Small sizes for smoke runs.
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub nodes: Option<u64>,
    #[arg(long)]
    pub edges: Option<usize>,
    #[arg(long)]
    pub shards: Option<usize>,
    /// Random inputs per sort size.
    #[arg(long)]
    pub samples: Option<usize>,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serialises")
}

/// Returns whether every checked invariant held.
pub fn run(args: BenchArgs) -> Result<bool> {
    let mode = match args.mode {
        ModeArg::Encrypted => Mode::Encrypted,
        ModeArg::Baseline => Mode::Baseline,
        ModeArg::Both => Mode::Both,
    };
    let want = |s: Suite| args.suite == s || args.suite == Suite::All;
    let mut out = Map::new();
    let mut ok = true;

    if want(Suite::Set) {
        let mut c = SetConfig { mode, ..Default::default() };
        if args.quick {
            c.x_sweep = vec![1, 10, 130, 502];
            c.reps = 1;
        }
        if let Some(s) = args.shards {
            c.shards = s;
        }
        let r = set_suite(&c)?;
        print!("{r}");
        ok &= r.law_holds && r.x_sweep.iter().chain(&r.xterm_sweep).all(|x| x.matches_baseline);
        out.insert("set".into(), to_value(&r));
    }
    if want(Suite::Arith) {
        let mut c = ArithConfig { mode, ..Default::default() };
        if args.quick {
            c.cases = 1000;
            c.cot_triples = 100;
        }
        let r = arith_suite(&c)?;
        print!("{r}");
        ok &= r.add_mismatches == 0 && r.mul_mismatches == 0 && r.cot_bad_triples == 0;
        out.insert("arith".into(), to_value(&r));
    }
    if want(Suite::Sort) {
        let mut c = SortConfig { mode, ..Default::default() };
        if args.quick {
            c.sizes = vec![2, 4, 8, 16];
            c.samples = 5;
        }
        if let Some(s) = args.samples {
            c.samples = s;
        }
        let r = sort_suite(&c)?;
        print!("{r}");
        ok &= r.rows.iter().all(|x| x.simulation_mismatches == 0 && x.order_mismatches == 0);
        out.insert("sort".into(), to_value(&r));
    }
    if want(Suite::Throughput) {
        let mut c = ThroughputConfig { mode, ..Default::default() };
        if args.quick {
            c.nodes = 200;
            c.edges = 1500;
            c.queries = 10;
            c.clients = 4;
        }
        c.clients = args.clients.unwrap_or(c.clients);
        c.queries = args.queries.unwrap_or(c.queries);
        c.nodes = args.nodes.unwrap_or(c.nodes);
        c.edges = args.edges.unwrap_or(c.edges);
        c.shards = args.shards.unwrap_or(c.shards);
        let r = throughput_suite(&c)?;
        print!("{r}");
        out.insert("throughput".into(), to_value(&r));
    }
    if let Some(p) = &args.json {
        let doc = json!({ "mode": to_value(&mode), "suites": Value::Object(out), "invariants_hold": ok });
        let text = serde_json::to_string_pretty(&doc).expect("json");
        std::fs::write(p, text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    }
    if !ok {
        eprintln!("bench: a checked invariant failed");
    }
    Ok(ok)
}
