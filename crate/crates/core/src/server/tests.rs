use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::crypto::MasterKeyBundle;
use crate::edb::{build_edb, emit_edb, shard_dir, Edb};
use crate::frontend::{FrontEnd, LocalCluster};
use crate::graph::{
    build_inverted_index, parse_edge_list, random_graph, EntityId, Graph, InvertedIndex, PlainEngine, ScoredId,
    SynthConfig, WeightPolicy,
};
use crate::mpc::RunMode;
use crate::planner::{Filter, QueryRequest, ScoreFormula};
use crate::transport::LoopbackNetwork;

fn keys() -> MasterKeyBundle {
    MasterKeyBundle::generate(&mut ChaCha20Rng::seed_from_u64(11))
}

/// Small pools and no pre-garbling keep test clusters cheap to start.
fn test_config(shards: usize) -> ClusterConfig {
    let mut c = ClusterConfig::local(shards);
    c.server.precompute = Vec::new();
    c.server.timeout_ms = 20_000;
    c.pool.scalar = 128;
    c.edb.fpr = 1e-6;
    c
}

fn fixture() -> InvertedIndex {
    let text = "1 2 10\n1 3 20\n1 4 30\n2 3 5\n2 4 50\n2 5 60\n3 2 7\n3 3 8\n3 7 9\n";
    let mut g = Graph::new();
    parse_edge_list(text.as_bytes(), "friend", WeightPolicy::FromFile, &mut g).unwrap();
    build_inverted_index(&g)
}

fn edb_for(idx: &InvertedIndex, k: &MasterKeyBundle, cfg: &ClusterConfig) -> Edb {
    build_edb(idx, k, &cfg.partition(), 3).unwrap()
}

fn start(idx: &InvertedIndex, cfg: ClusterConfig) -> LocalCluster {
    let k = keys();
    LocalCluster::start(&edb_for(idx, &k, &cfg), &k, cfg).unwrap()
}

fn set(v: &[EntityId]) -> BTreeSet<EntityId> {
    v.iter().copied().collect()
}

/// Ranked output agrees with the oracle up to ties: same score sequence,
/// every id carries the score at its position.
fn assert_ranked(got: &[EntityId], want: &[ScoredId], all: &[ScoredId], ctx: &str) {
    let score: BTreeMap<EntityId, u32> = all.iter().map(|s| (s.id, s.score)).collect();
    assert_eq!(got.len(), want.len(), "{ctx}: length");
    for (p, (g, w)) in got.iter().zip(want).enumerate() {
        assert_eq!(score.get(g), Some(&w.score), "{ctx}: position {p}");
    }
    assert_eq!(set(got).len(), got.len(), "{ctx}: duplicate ids");
}

#[test]
fn set_queries_match_oracle() {
    let idx = fixture();
    let plain = PlainEngine::new(&idx);
    for shards in 1..=3 {
        let lc = start(&idx, test_config(shards));
        for q in [
            "(term friend:1)",
            "(and friend:1 friend:2)",
            "(or friend:1 friend:3)",
            "(difference friend:3 (and friend:1 friend:2))",
            "(apply friend: friend:1)",
            "(term friend:42)",
        ] {
            let req = QueryRequest::parse(q).unwrap();
            let want: Vec<EntityId> = plain.query(&req).unwrap().iter().map(|s| s.id).collect();
            assert_eq!(set(&lc.query(&req).unwrap()), set(&want), "{q} on {shards} shards");
        }
        lc.shutdown().unwrap();
    }
}

#[test]
fn sorted_queries_match_oracle() {
    let idx = fixture();
    let plain = PlainEngine::new(&idx);
    let lc = start(&idx, test_config(2));
    for (q, f) in [
        ("(term friend:1)", Filter::sorted()),
        ("(or friend:1 friend:2)", Filter::sorted()),
        ("(or friend:1 friend:2 friend:3)", Filter::top_k(3)),
        ("(and friend:1 friend:2)", Filter::top_k(1)),
        ("(term friend:42)", Filter::sorted()),
    ] {
        let req = QueryRequest::parse(q).unwrap().filter(f.clone());
        let want = plain.query(&req).unwrap();
        let all = plain.query(&req.clone().filter(Filter::sorted())).unwrap();
        assert_ranked(&lc.query(&req).unwrap(), &want, &all, q);
    }
}

#[test]
fn score_formulas_on_shares() {
    let idx = fixture();
    let plain = PlainEngine::new(&idx);
    let lc = start(&idx, test_config(2));
    for text in ["key", "(+ key 7)", "(* key 3)", "(* key key)", "(+ (* key key) (* 2 key))", "(* key src)"] {
        let f = Filter::sorted().with_formula(ScoreFormula::parse(text).unwrap());
        let mut req = QueryRequest::parse("(or friend:1 friend:2 friend:3)").unwrap().filter(f);
        req.weights.insert("friend:2".parse().unwrap(), 5);
        let want = plain.query(&req).unwrap();
        assert_ranked(&lc.query(&req).unwrap(), &want, &want, text);
    }
    // Shared products consumed triples from the pool.
    assert!(lc.server(0, 0).shared.pool.lock().unwrap().consumed() > 0);
}

#[test]
fn degraded_without_counterpart() {
    let idx = fixture();
    let lc = start(&idx, test_config(2));
    lc.take_down(1, 1);
    let sorted = QueryRequest::parse("(term friend:1)").unwrap().filter(Filter::sorted());
    assert!(matches!(lc.query(&sorted), Err(Error::Degraded)));
    let plain = QueryRequest::parse("(and friend:1 friend:2)").unwrap();
    assert_eq!(set(&lc.query(&plain).unwrap()), set(&[EntityId(3), EntityId(4)]));
}

#[test]
fn server_started_alone_is_degraded() {
    let idx = fixture();
    let k = keys();
    let cfg = test_config(1);
    let edb = edb_for(&idx, &k, &cfg);
    let net = LoopbackNetwork::new();
    let s = IndexServer::start(cfg, 0, 0, ShardStore { edb: edb.servers[0][0].clone() }, net).unwrap();
    assert!(s.is_degraded());
}

#[test]
fn silent_shard_is_a_partial_result() {
    let idx = fixture();
    let k = keys();
    let mut cfg = test_config(2);
    cfg.server.timeout_ms = 300;
    let edb = edb_for(&idx, &k, &cfg);
    let net = LoopbackNetwork::new();
    let dn: Arc<dyn Network> = net.clone();
    let _s0 = IndexServer::start(cfg.clone(), 0, 0, ShardStore { edb: edb.servers[0][0].clone() }, dn.clone()).unwrap();
    // Shard 1 accepts connections and never answers.
    let l = dn.listen("c0s1").unwrap();
    let hold = std::thread::spawn(move || {
        let mut kept = Vec::new();
        for _ in 0..20 {
            if let Ok(Some(c)) = l.accept_timeout(Duration::from_millis(50)) {
                kept.push(c);
            }
        }
    });
    let fe = FrontEnd::new(k, cfg.topology.clone(), dn, Duration::from_millis(300));
    let r = fe.query(&QueryRequest::parse("(term friend:1)").unwrap());
    assert!(matches!(r, Err(Error::Partial { ref shards, .. }) if shards == &vec![1]), "{r:?}");
    hold.join().unwrap();
}

#[test]
fn corrupted_shard_refuses_startup_and_reload_is_idempotent() {
    let idx = fixture();
    let k = keys();
    let cfg = test_config(2);
    let edb = edb_for(&idx, &k, &cfg);
    let dir = tempfile::tempdir().unwrap();
    emit_edb(&edb, dir.path()).unwrap();
    let d = shard_dir(dir.path(), 0, 1);
    let a = ShardStore::open(&d).unwrap();
    let b = ShardStore::open(&d).unwrap();
    assert_eq!(a.manifest(), b.manifest());
    assert_eq!(a.fingerprint(), b.fingerprint());
    let p = d.join("tset.bin");
    let mut bytes = std::fs::read(&p).unwrap();
    let n = bytes.len();
    bytes[n / 2] ^= 0x40;
    std::fs::write(&p, bytes).unwrap();
    assert!(matches!(ShardStore::open(&d), Err(Error::Checksum(_))));
    assert!(matches!(LocalCluster::open(dir.path(), &k, cfg), Err(Error::Checksum(_))));
}

#[test]
fn wrong_shard_files_rejected() {
    let idx = fixture();
    let k = keys();
    let cfg = test_config(2);
    let edb = edb_for(&idx, &k, &cfg);
    let net = LoopbackNetwork::new();
    let r = IndexServer::start(cfg, 0, 1, ShardStore { edb: edb.servers[0][0].clone() }, net);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn concurrent_queries_equal_sequential() {
    let g = random_graph(&SynthConfig::new(150, 1200, 4));
    let idx = build_inverted_index(&g);
    let lc = start(&idx, test_config(2));
    let queries: Vec<QueryRequest> = (0..100)
        .map(|i| {
            let q = match i % 4 {
                0 => format!("(term friend:{})", i % 150),
                1 => format!("(and friend:{} friend:{})", i % 150, (i * 7) % 150),
                2 => format!("(or friend:{} friend:{})", i % 150, (i * 3) % 150),
                _ => format!("(difference friend:{} friend:{})", i % 150, (i * 5) % 150),
            };
            let f = if i % 5 == 0 { Filter::top_k(5) } else { Filter::none() };
            QueryRequest::parse(&q).unwrap().filter(f)
        })
        .collect();
    let seq: Vec<BTreeSet<EntityId>> = queries.iter().map(|q| set(&lc.query(q).unwrap())).collect();
    let before = lc.server(0, 1).store().fingerprint();
    let par: Vec<BTreeSet<EntityId>> = std::thread::scope(|sc| {
        let hs: Vec<_> = queries.iter().map(|q| sc.spawn(|| set(&lc.query(q).unwrap()))).collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for (i, (a, b)) in seq.iter().zip(&par).enumerate() {
        if queries[i].filter.top_k.is_none() {
            assert_eq!(a, b, "query {i}");
        } else {
            assert_eq!(a.len(), b.len(), "query {i}");
        }
    }
    assert_eq!(before, lc.server(0, 1).store().fingerprint());
}

#[test]
fn dealer_mode_and_recording() {
    let idx = fixture();
    let mut cfg = test_config(2);
    cfg.server.run_mode = RunMode::DealerTest;
    cfg.server.dealer_seed = Some(9);
    cfg.server.record = true;
    cfg.server.precompute = vec![2, 4];
    let lc = start(&idx, cfg);
    assert_eq!(lc.server(0, 0).circuit_cache().pregarbled(4, 4), 1);
    assert_eq!(lc.server(1, 0).circuit_cache().pregarbled(4, 4), 0);
    let f = Filter::sorted().with_formula(ScoreFormula::parse("(* key key)").unwrap());
    let req = QueryRequest::parse("(term friend:2)").unwrap().filter(f);
    let plain = PlainEngine::new(&idx);
    let want = plain.query(&req).unwrap();
    assert_ranked(&lc.query(&req).unwrap(), &want, &want, "dealer");
    let ts = lc.transcripts();
    assert_eq!(ts.len(), 4);
    // Global sort role switch: the cluster-1 coordinator sends the circuit.
    let sent_blob = |name: &str| {
        ts.iter().find(|t| t.server == name).unwrap().entries.iter().any(|e| {
            e.direction == crate::transport::Direction::Sent && e.frame.msg_type == MsgType::CircuitBlob
        })
    };
    assert!(sent_blob("c1s0"));
    assert!(sent_blob("c0s1"));
    assert!(!sent_blob("c1s1"));
}

#[test]
fn ping_answers() {
    let idx = fixture();
    let lc = start(&idx, test_config(1));
    let h = ping(&*lc.net, "c1s0", Duration::from_secs(5)).unwrap();
    assert_eq!((h.cluster, h.shard), (1, 0));
}
