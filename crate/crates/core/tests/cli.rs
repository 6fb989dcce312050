mod common;

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use encgraph::graph::{build_inverted_index, random_graph, random_query, InvertedIndex, PlainEngine, SynthConfig};
use encgraph::planner::{Filter, QueryRequest};
use encgraph::server::ClusterConfig;
use encgraph::transport::{MsgType, Transcript};

use common::*;

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_1k.txt")
}

fn fingerprint(out: &str) -> String {
    out.lines().find(|l| l.starts_with("edb fingerprint")).expect("fingerprint line").to_string()
}

/// Small tie-free graph written as an edge file and set up under `dir/db`.
fn fixture(dir: &Path) -> (InvertedIndex, PathBuf) {
    let mut sc = SynthConfig::new(120, 900, 21);
    sc.distinct_weights = true;
    let g = random_graph(&sc);
    let edges = dir.join("edges.txt");
    write_edges(&g, &edges);
    let db = dir.join("db");
    let o = run(&["setup", "--edges", p(&edges), "--out", p(&db), "--seed", "5", "--shards", "2", "--fpr", "1e-9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    (build_inverted_index(&g), db)
}

#[test]
fn setup_is_deterministic_and_reports_storage() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let t = Instant::now();
    let oa = run(&["setup", "--edges", p(&sample()), "--out", p(&a), "--seed", "9"]);
    assert!(t.elapsed() < Duration::from_secs(60));
    let ob = run(&["setup", "--edges", p(&sample()), "--out", p(&b), "--seed", "9"]);
    assert!(oa.status.success() && ob.status.success(), "{}", stderr(&oa));
    let (sa, sb) = (stdout(&oa), stdout(&ob));
    assert_eq!(fingerprint(&sa), fingerprint(&sb));
    assert!(sa.contains("shard sums match totals: yes"), "{sa}");
    assert!(sa.contains("over plaintext"), "{sa}");
    for f in ["cluster.toml", "keystore.bin", "dataset.json", "edb/cluster0/shard0/tset.bin", "edb/cluster1/shard1/manifest.json"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    let c = run(&["setup", "--edges", p(&sample()), "--out", p(&dir.path().join("c")), "--seed", "10"]);
    assert_ne!(fingerprint(&stdout(&c)), fingerprint(&sa));
}

#[test]
fn setup_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["setup", "--edges", p(&dir.path().join("missing.txt")), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1 2 5\n3 four 7\n").unwrap();
    let o = run(&["setup", "--edges", p(&bad), "--out", p(&dir.path().join("y"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains('2'), "line number expected: {}", stderr(&o));
}

#[test]
fn local_queries_match_plaintext() {
    let dir = tempfile::tempdir().unwrap();
    let (idx, db) = fixture(dir.path());
    let plain = PlainEngine::new(&idx);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let texts: Vec<String> = (0..10).map(|i| random_query(&mut rng, 120, "friend", i)).collect();
    let batch = dir.path().join("batch.txt");
    std::fs::write(&batch, texts.join("\n")).unwrap();
    let o = run(&["query", "--dir", p(&db), "--local", "--batch", p(&batch)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let blocks: Vec<&str> = out.split("# ").skip(1).collect();
    assert_eq!(blocks.len(), texts.len());
    for (text, block) in texts.iter().zip(blocks) {
        let (head, body) = block.split_once('\n').unwrap();
        assert_eq!(head, text);
        // Unsorted output order is unspecified; compare as sets.
        let want: BTreeSet<u64> = plain.query(&QueryRequest::parse(text).unwrap()).unwrap().iter().map(|s| s.id.0).collect();
        let got = parse_ids(body);
        assert_eq!(got.len(), want.len(), "{text}");
        assert_eq!(got.into_iter().collect::<BTreeSet<_>>(), want, "{text}");
    }

    // Ranked single query with --rank output.
    let term = texts[0].trim_start_matches("(term ").trim_end_matches(')');
    let o = run(&["query", &format!("(term {term})"), "--dir", p(&db), "--local", "--top-k", "3", "--rank"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let want = plain.query(&QueryRequest::parse(&format!("(term {term})")).unwrap().filter(Filter::top_k(3))).unwrap();
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    let expect: Vec<String> = want.iter().enumerate().map(|(i, s)| format!("{}\t{}", i + 1, s.id.0)).collect();
    assert_eq!(lines, expect);
}

#[test]
fn malformed_query_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let (_, db) = fixture(dir.path());
    let o = run(&["query", "(and friend:1", "--dir", p(&db), "--local"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("position"), "{}", stderr(&o));
    let o = run(&["query", "(term friend:1)", "--dir", p(&db), "--score", "(^ key 2)"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

/// Kills spawned servers however the test ends.
struct Servers(Vec<Child>);

impl Drop for Servers {
    fn drop(&mut self) {
        for c in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn free_ports(n: usize) -> Vec<u16> {
    let ls: Vec<TcpListener> = (0..n).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    ls.iter().map(|l| l.local_addr().unwrap().port()).collect()
}

#[test]
fn multi_process_equals_local() {
    let dir = tempfile::tempdir().unwrap();
    let (_, db) = fixture(dir.path());
    let mut cfg = ClusterConfig::load(&db.join("cluster.toml")).unwrap();
    let ports = free_ports(4);
    let addr = |p: u16| format!("127.0.0.1:{p}");
    cfg.topology.cluster0 = vec![addr(ports[0]), addr(ports[1])];
    cfg.topology.cluster1 = vec![addr(ports[2]), addr(ports[3])];
    let cfg_path = dir.path().join("tcp.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();

    let mut servers = Servers(Vec::new());
    let (tx, rx) = mpsc::channel();
    for (c, j) in [(1, 0), (1, 1), (0, 0), (0, 1)] {
        let mut child = Command::new(bin())
            .args(["--config", p(&cfg_path), "serve", "--dir", p(&db), "--cluster", &c.to_string(), "--shard", &j.to_string()])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let out = child.stdout.take().unwrap();
        servers.0.push(child);
        let tx = tx.clone();
        std::thread::spawn(move || {
            for line in BufReader::new(out).lines().map_while(Result::ok) {
                if line.starts_with("ready") {
                    let _ = tx.send(line);
                }
            }
        });
        // Cluster 0 fills its triple pool from cluster 1 on startup.
        if c == 1 && j == 1 {
            for _ in 0..2 {
                rx.recv_timeout(Duration::from_secs(60)).expect("cluster 1 ready");
            }
        }
    }
    for _ in 0..2 {
        let line = rx.recv_timeout(Duration::from_secs(120)).expect("cluster 0 ready");
        assert!(!line.contains("degraded"), "{line}");
    }

    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let texts: Vec<String> = (0..10).map(|i| random_query(&mut rng, 120, "friend", i)).collect();
    let batch = dir.path().join("batch.txt");
    std::fs::write(&batch, texts.join("\n")).unwrap();
    for extra in [&[][..], &["--top-k", "5"][..]] {
        let mut args = vec!["--config", p(&cfg_path), "query", "--dir", p(&db), "--batch", p(&batch)];
        args.extend_from_slice(extra);
        let tcp = run(&args);
        assert!(tcp.status.success(), "{}", stderr(&tcp));
        let mut args = vec!["query", "--dir", p(&db), "--local", "--batch", p(&batch)];
        args.extend_from_slice(extra);
        let local = run(&args);
        assert!(local.status.success(), "{}", stderr(&local));
        assert_eq!(stdout(&tcp), stdout(&local), "{extra:?}");
    }
}

#[test]
fn serve_without_edb_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (_, db) = fixture(dir.path());
    let o = run(&["serve", "--dir", p(&db), "--cluster", "0", "--shard", "7"]);
    assert_eq!(o.status.code(), Some(1));
}

fn bench_json(args: &[&str], dir: &Path) -> serde_json::Value {
    let json = dir.join(format!("{}.json", args.join("_").replace('-', "")));
    let mut all = vec!["bench", "--quick", "--json", p(&json)];
    all.extend_from_slice(args);
    let o = run(&all);
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap()
}

#[test]
fn bench_suites_write_json() {
    let dir = tempfile::tempdir().unwrap();
    let v = bench_json(&["--suite", "set"], dir.path());
    assert_eq!(v["invariants_hold"], true);
    let set = &v["suites"]["set"];
    assert_eq!(set["law_holds"], true);
    for row in set["x_sweep"].as_array().unwrap() {
        assert_eq!(row["exponentiations"][0], 130);
    }

    let v = bench_json(&["--suite", "arith", "--mode", "encrypted"], dir.path());
    let a = &v["suites"]["arith"];
    assert_eq!(a["add_mismatches"], 0);
    assert_eq!(a["mul_mismatches"], 0);
    assert!(a["plain_add_us"].is_null());
    assert!(a["secure_add_us"].is_number());

    let v = bench_json(&["--suite", "sort", "--mode", "baseline"], dir.path());
    let rows = v["suites"]["sort"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["garble_us"].is_null() && r["plain_sort_us"].is_number()));

    let v = bench_json(&["--suite", "throughput", "--queries", "4"], dir.path());
    let rows = v["suites"]["throughput"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r["ratio"].is_number() && r["errors"] == 0));
}

#[test]
fn bench_rejects_unknown_suite() {
    let o = run(&["bench", "--suite", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn recorded_run_audits_clean_and_tampering_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (_, db) = fixture(dir.path());
    let rec = dir.path().join("rec");
    let batch = dir.path().join("batch.txt");
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let texts: Vec<String> = (0..10).map(|i| random_query(&mut rng, 120, "friend", i)).collect();
    std::fs::write(&batch, texts.join("\n")).unwrap();
    let o = run(&["query", "--dir", p(&db), "--local", "--batch", p(&batch), "--top-k", "4", "--record", p(&rec)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(rec.join("workload.json").is_file());

    let keystore = db.join("keystore.bin");
    let o = run(&["audit", p(&rec), "--keystore", p(&keystore)]);
    let out = stdout(&o);
    assert!(o.status.success(), "{out}");
    assert!(out.contains("audit PASSED") && out.contains("inconsistencies: 0"), "{out}");

    // Key bytes planted in a recorded stag.
    let key = std::fs::read(&keystore).unwrap();
    let path = rec.join("c0s0.bin");
    let mut t = Transcript::read(&path).unwrap();
    let e = t.entries.iter_mut().find(|e| e.frame.msg_type == MsgType::Subquery).unwrap();
    let keys = encgraph::crypto::MasterKeyBundle::from_keystore_bytes(&key).unwrap().key_bytes();
    e.frame.payload[..16].copy_from_slice(&keys[0]);
    t.write(&path).unwrap();
    let o = run(&["audit", p(&rec), "--keystore", p(&keystore)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("KeyMaterial"), "{}", stdout(&o));
    // The structural scan alone cannot see key bytes without the keystore.
    let o = run(&["audit", p(&rec), "--structural-only"]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn audit_flags_a_workload_that_does_not_match() {
    let dir = tempfile::tempdir().unwrap();
    let (idx, db) = fixture(dir.path());
    let rec = dir.path().join("rec");
    let first = idx.lists().next().unwrap().term.clone();
    let o = run(&["query", &format!("(term {first})"), "--dir", p(&db), "--local", "--record", p(&rec)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let wl = rec.join("workload.json");
    let text = std::fs::read_to_string(&wl).unwrap();
    let other = idx.lists().find(|l| l.len() != idx.len_of(&first)).unwrap().term.clone();
    std::fs::write(&wl, text.replace(&first.to_string(), &other.to_string())).unwrap();
    let o = run(&["audit", p(&rec)]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("audit FAILED"));
}

#[test]
fn query_needs_one_source_and_record_needs_local() {
    let dir = tempfile::tempdir().unwrap();
    let (_, db) = fixture(dir.path());
    let o = run(&["query", "--dir", p(&db), "--local"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["query", "(term friend:1)", "--dir", p(&db), "--record", p(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--local"));
}
