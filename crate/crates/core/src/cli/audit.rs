use std::path::PathBuf;

use clap::Args;

use encgraph::crypto::MasterKeyBundle;
use encgraph::leakage::{audit_transcripts, check_transcript_consistency, compute_leakage, AuditOptions};
use encgraph::transport::Transcript;
use encgraph::{Error, Result};

use super::layout::{read_json, Workload, WORKLOAD_FILE};

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// Directory of recorded `c{i}s{j}.bin` transcripts.
    pub transcripts: PathBuf,
    /// Also search every payload for these key bytes.
    #[arg(long)]
    pub keystore: Option<PathBuf>,
    /// Skip the leakage-profile comparison even when a workload file exists.
    #[arg(long)]
    pub structural_only: bool,
}

/// Returns whether the audit passed.
pub fn run(args: AuditArgs) -> Result<bool> {
    let dir = &args.transcripts;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("{} holds no transcripts", dir.display())));
    }
    let transcripts = paths.iter().map(|p| Transcript::read(p)).collect::<Result<Vec<_>>>()?;
    let mut opts = AuditOptions::default();
    if let Some(k) = &args.keystore {
        opts.needles = MasterKeyBundle::read_keystore(k)?.key_bytes().into_iter().map(|k| k.to_vec()).collect();
    }
    let report = audit_transcripts(&transcripts, &opts);
    print!("{report}");
    let mut ok = report.is_clean();

    let wl = dir.join(WORKLOAD_FILE);
    if !args.structural_only && wl.is_file() {
        let w: Workload = read_json(&wl)?;
        let index = w.dataset.index()?;
        let queries = w.queries.iter().map(|q| q.request()).collect::<Result<Vec<_>>>()?;
        let profile = compute_leakage(&index, &queries, &w.partition)?;
        let v = check_transcript_consistency(&profile, &transcripts);
        println!("N: {} entries over {} shards", profile.n, profile.shards);
        println!(
            "leakage profile: {} queries, {} rounds, {} checked, {} IP pairs",
            w.queries.len(),
            profile.rounds().count(),
            v.rounds_checked,
            profile.ip.len()
        );
        for n in &v.notes {
            println!("  note: {n}");
        }
        println!("inconsistencies: {}", v.violations.len());
        for x in &v.violations {
            println!("  {x}");
        }
        ok &= v.is_consistent();
    } else {
        println!("leakage profile: not checked (no {WORKLOAD_FILE})");
    }
    println!("audit {}", if ok { "PASSED" } else { "FAILED" });
    Ok(ok)
}
