pub mod audit;
pub mod bench;
pub mod layout;
pub mod query;
pub mod serve;
pub mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use encgraph::Error;

#[derive(Parser, Debug)]
#[command(name = "encgraph", version, about = "Encrypted social-graph search")]
pub struct Cli {
    /// Cluster config (TOML). Defaults to the one setup wrote.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the encrypted database, keys and config from an edge list.
    Setup(setup::SetupArgs),
    /// Run one index server over TCP.
    Serve(serve::ServeArgs),
    /// Run queries as the front-end.
    Query(query::QueryArgs),
    /// Encrypted and baseline benchmarks.
    Bench(bench::BenchArgs),
    /// Check recorded transcripts against the leakage model.
    Audit(audit::AuditArgs),
}

fn code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } => 2,
        _ => 1,
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Setup(a) => setup::run(a, cli.config).map(|_| true),
        Command::Serve(a) => serve::run(a, cli.config).map(|_| true),
        Command::Query(a) => query::run(a, cli.config).map(|_| true),
        Command::Bench(a) => bench::run(a),
        Command::Audit(a) => audit::run(a),
    };
    match r {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code(&e))
        }
    }
}
