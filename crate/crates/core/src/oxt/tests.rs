use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::crypto::{stag_derive, MasterKeyBundle};
use crate::edb::{build_edb, Edb, PartitionConfig};
use crate::graph::{build_inverted_index, parse_edge_list, random_graph, EntityId, Graph, PlainEngine, SynthConfig, WeightPolicy};
use crate::planner::{decompose, parse_sexpr, subqueries, Subquery};
use crate::Error;

fn keys() -> MasterKeyBundle {
    MasterKeyBundle::generate(&mut ChaCha20Rng::seed_from_u64(5))
}

fn cfg(shards: usize) -> PartitionConfig {
    PartitionConfig { shards, fpr: 1e-3, ..Default::default() }
}

/// Runs one subquery on every cluster-0 shard and decrypts.
fn run(edb: &Edb, keys: &MasterKeyBundle, sq: &Subquery, counters: &OxtCounters) -> crate::Result<Vec<EntityId>> {
    let stag = stag_derive(keys, &sq.s_term);
    let mut out = Vec::new();
    for (j, shard) in edb.servers[0].iter().enumerate() {
        let tuples = index_access(&shard.tset, &stag)?;
        let rows = xtoken_rows(keys, &sq.s_term, &sq.x_terms, if sq.x_terms.is_empty() { 0 } else { tuples.len() });
        let keep = filter_tuples(&tuples, &shard.xset, &sq.formula, sq.negate, &rows, counters)?;
        let e_ids: Vec<_> = keep.iter().map(|i| tuples[*i].e_id).collect();
        out.extend(decrypt_results(keys, &sq.s_term, j, &e_ids)?);
    }
    Ok(out)
}

fn fixture() -> (crate::graph::InvertedIndex, Edb, MasterKeyBundle) {
    let text = "1 2 10\n1 3 20\n1 4 30\n2 3 5\n2 4 50\n2 5 60\n3 2 7\n3 3 8\n3 7 9\n";
    let mut g = Graph::new();
    parse_edge_list(text.as_bytes(), "friend", WeightPolicy::FromFile, &mut g).unwrap();
    let idx = build_inverted_index(&g);
    let k = keys();
    let edb = build_edb(&idx, &k, &cfg(2), 1).unwrap();
    (idx, edb, k)
}

fn sorted(v: Vec<EntityId>) -> Vec<u64> {
    let mut v: Vec<u64> = v.into_iter().map(|i| i.0).collect();
    v.sort();
    v
}

#[test]
fn worked_examples() {
    let (_, edb, k) = fixture();
    let c = OxtCounters::default();
    let q = |s: &str| sorted(run(&edb, &k, &decompose(&parse_sexpr(s).unwrap()).unwrap(), &c).unwrap());
    assert_eq!(q("(term friend:1)"), vec![2, 3, 4]);
    assert_eq!(q("(and friend:1 friend:2)"), vec![3, 4]);
    assert_eq!(q("(difference friend:3 (and friend:1 friend:2))"), vec![2, 7]);
    assert_eq!(q("(term friend:99)"), Vec::<u64>::new());
}

#[test]
fn true_formula_is_index_access() {
    let (_, edb, k) = fixture();
    let stag = stag_derive(&k, &"friend:2".parse().unwrap());
    let shard = &edb.servers[0][0];
    let bundle = TokenBundle { stag, x_terms: 0, formula: BoolFormula::True, negate: false, xtokens: vec![] };
    let c = OxtCounters::default();
    assert_eq!(boolean_query(&shard.tset, &shard.xset, &bundle, &c).unwrap(), index_access(&shard.tset, &stag).unwrap());
    assert_eq!(c.exponentiations(), 0);
}

#[test]
fn formula_arity_mismatch() {
    let (_, edb, k) = fixture();
    let shard = &edb.servers[0][0];
    let s = "friend:2".parse().unwrap();
    let tuples = index_access(&shard.tset, &stag_derive(&k, &s)).unwrap();
    assert!(!tuples.is_empty());
    let rows = xtoken_rows(&k, &s, &["friend:1".parse().unwrap()], tuples.len());
    let c = OxtCounters::default();
    let f = BoolFormula::Var(1);
    assert!(matches!(filter_tuples(&tuples, &shard.xset, &f, false, &rows, &c), Err(Error::Protocol(_))));
}

#[test]
fn random_queries_match_plaintext() {
    let k = keys();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut fp = 0usize;
    let mut budget = 0f64;
    for g in 0..3 {
        let graph = random_graph(&SynthConfig::new(200, 2000, 100 + g));
        let idx = build_inverted_index(&graph);
        let edb = build_edb(&idx, &k, &cfg(3), g).unwrap();
        let plain = PlainEngine::new(&idx);
        for _ in 0..40 {
            let t = |r: &mut ChaCha20Rng| format!("friend:{}", r.gen_range(0..200));
            let text = match rng.gen_range(0..4) {
                0 => t(&mut rng),
                1 => format!("(and {} {})", t(&mut rng), t(&mut rng)),
                2 => format!("(or {} {} {})", t(&mut rng), t(&mut rng), t(&mut rng)),
                _ => format!("(difference {} (and {} {}))", t(&mut rng), t(&mut rng), t(&mut rng)),
            };
            let e = parse_sexpr(&text).unwrap();
            let want: BTreeSet<EntityId> = plain.eval_set(&e).unwrap();
            let c = OxtCounters::default();
            let mut got = BTreeSet::new();
            for sq in subqueries(&e).unwrap() {
                let s_len = idx.len_of(&sq.s_term);
                budget += 1e-3 * (s_len * sq.x_terms.len()) as f64;
                for id in run(&edb, &k, &sq, &c).unwrap() {
                    assert!(got.insert(id), "subqueries overlap on {id:?} in {text}");
                }
            }
            assert!(got.is_superset(&want), "{text}");
            fp += got.difference(&want).count();
        }
    }
    assert!((fp as f64) <= (2.0 * budget).max(1.0), "false positives {fp} exceed budget {budget}");
}

#[test]
fn exponentiations_independent_of_x_selectivity() {
    // s-term with 130 entries, x-terms from 1 to 130 entries.
    let mut g = Graph::new();
    let mut text = String::new();
    for v in 1..=130 {
        text.push_str(&format!("0 {v} 1\n"));
    }
    for (x, size) in [(1000u64, 1usize), (1001, 50), (1002, 130)] {
        for v in 1..=size {
            text.push_str(&format!("{x} {v} 1\n"));
        }
    }
    parse_edge_list(text.as_bytes(), "friend", WeightPolicy::FromFile, &mut g).unwrap();
    let idx = build_inverted_index(&g);
    let k = keys();
    let edb = build_edb(&idx, &k, &cfg(1), 1).unwrap();
    for x in [1000, 1001, 1002] {
        let c = OxtCounters::default();
        let sq = decompose(&parse_sexpr(&format!("(and friend:0 friend:{x})")).unwrap()).unwrap();
        run(&edb, &k, &sq, &c).unwrap();
        assert_eq!(c.exponentiations(), 130);
    }
    for n in 1..=3 {
        let c = OxtCounters::default();
        let xs: Vec<String> = (0..n).map(|i| format!("friend:{}", 1000 + i)).collect();
        let sq = decompose(&parse_sexpr(&format!("(and friend:0 {})", xs.join(" "))).unwrap()).unwrap();
        run(&edb, &k, &sq, &c).unwrap();
        assert_eq!(c.exponentiations(), 130 * n as u64);
    }
}

#[test]
fn tampered_ciphertext_is_an_integrity_error() {
    let (_, edb, k) = fixture();
    let s = "friend:1".parse().unwrap();
    for (j, shard) in edb.servers[0].iter().enumerate() {
        let mut t = index_access(&shard.tset, &stag_derive(&k, &s)).unwrap();
        if t.is_empty() {
            continue;
        }
        t[0].e_id.0[20] ^= 1;
        let e: Vec<_> = t.iter().map(|x| x.e_id).collect();
        assert!(matches!(decrypt_results(&k, &s, j, &e), Err(Error::Integrity { shard }) if shard == j));
    }
    assert!(decrypt_results(&k, &s, 0, &[]).unwrap().is_empty());
}

#[test]
fn xtoken_wire_roundtrip() {
    let k = keys();
    let rows = xtoken_rows(&k, &"friend:1".parse().unwrap(), &["friend:2".parse().unwrap(), "friend:3".parse().unwrap()], 3);
    let bytes = encode_xtokens(&rows, 2);
    assert_eq!(decode_xtokens(&bytes).unwrap(), rows);
    assert!(decode_xtokens(&bytes[..bytes.len() - 1]).is_err());
    // An empty s-term list still announces its x-term count.
    let empty = encode_xtokens(&[], 2);
    assert_eq!(empty, [0, 0, 0, 0, 0, 2]);
}
