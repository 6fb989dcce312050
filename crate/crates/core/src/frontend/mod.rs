//! Trusted front-end: plans queries, derives tokens, drives both clusters
//! and decrypts what comes back.

mod local;

pub use local::LocalCluster;

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;

use crate::crypto::{stag_derive, Ciphertext, MasterKeyBundle};
use crate::error::{Error, Result};
use crate::graph::{apply_weights, EntityId, TermWeights};
use crate::oxt::{decrypt_results, encode_xtokens, xtoken_rows};
use crate::planner::{instantiate, plan, Filter, QueryPlan, QueryRequest, Subquery};
use crate::proto::{
    decode_count, decode_eids, decode_error, decode_ranking, Hello, HelloKind, QueryBegin, SubqueryMsg,
};
use crate::server::Topology;
use crate::transport::{send_msg, Channel, Frame, MsgType, Network, TransportError};

/// What one round looked like from the front-end.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundTrace {
    pub session: u64,
    pub subqueries: usize,
    pub sorted: bool,
    /// Matching tuples across shards before any top-k cut.
    pub matches: usize,
    /// Decrypted round output, ranked when sorted.
    pub ids: Vec<EntityId>,
}

#[derive(Clone, Debug)]
pub struct QueryOutcome {
    pub ids: Vec<EntityId>,
    pub rounds: Vec<RoundTrace>,
}

pub struct FrontEnd {
    keys: MasterKeyBundle,
    topology: Topology,
    net: Arc<dyn Network>,
    timeout: Duration,
}

struct ShardOut {
    eids: Vec<(usize, Ciphertext)>,
    ranking: Option<Vec<(usize, usize)>>,
}

impl FrontEnd {
    pub fn new(keys: MasterKeyBundle, topology: Topology, net: Arc<dyn Network>, timeout: Duration) -> Self {
        FrontEnd { keys, topology, net, timeout }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn query(&self, req: &QueryRequest) -> Result<Vec<EntityId>> {
        Ok(self.query_traced(req)?.ids)
    }

    pub fn query_traced(&self, req: &QueryRequest) -> Result<QueryOutcome> {
        let p = plan(&req.expr, &req.filter, &req.nested_filter, req.max_rounds)?;
        let mut rounds = Vec::new();
        let ids = self.execute(&p, req, &req.weights, &mut rounds)?;
        Ok(QueryOutcome { ids, rounds })
    }

    fn execute(&self, p: &QueryPlan, req: &QueryRequest, weights: &TermWeights, trace: &mut Vec<RoundTrace>) -> Result<Vec<EntityId>> {
        let Some(ap) = &p.apply else {
            return self.run_round(&p.subqueries, &p.filter, weights, trace);
        };
        let mut ids = self.execute(&ap.nested, req, weights, trace)?;
        if !req.nested_filter.is_sorted() {
            ids.sort();
        }
        let Some(e) = instantiate(&req.template, &ap.prefix, &ids) else {
            return Ok(Vec::new());
        };
        let w = apply_weights(&ap.prefix, &ids, &req.nested_filter);
        let outer = plan(&e, &p.filter, &req.nested_filter, 1)?;
        self.run_round(&outer.subqueries, &p.filter, &w, trace)
    }

    /// One broadcast round over every shard: cluster 0 only for set
    /// queries, both clusters when the round is ranked.
    pub fn run_round(
        &self,
        subs: &[Subquery],
        filter: &Filter,
        weights: &TermWeights,
        trace: &mut Vec<RoundTrace>,
    ) -> Result<Vec<EntityId>> {
        let session: u64 = rand::thread_rng().gen();
        let sorted = filter.is_sorted();
        let begin = QueryBegin {
            subqueries: subs.len() as u32,
            sorted,
            top_k: filter.top_k.map(|k| k as u32),
            formula: filter.formula.clone(),
            weights: subs.iter().map(|s| weights.get(&s.s_term).copied().unwrap_or(1)).collect(),
        };
        let shards = self.topology.shards();
        let mut conns = Vec::with_capacity(shards);
        for j in 0..shards {
            conns.push(self.connect(j, session, &begin)?);
        }
        let outs: Vec<Result<ShardOut>> = std::thread::scope(|sc| {
            let hs: Vec<_> = conns
                .into_iter()
                .enumerate()
                .map(|(j, chans)| {
                    let begin = &begin;
                    sc.spawn(move || self.shard_round(j, chans, session, begin, subs))
                })
                .collect();
            hs.into_iter().map(|h| h.join().expect("shard driver panicked")).collect()
        });
        let outs = merge_errors(outs)?;
        let matches = outs.iter().map(|o| o.eids.len()).sum();
        let ids = if sorted {
            let ranking = outs[0].ranking.clone().unwrap_or_default();
            let mut ids = Vec::with_capacity(ranking.len());
            for (shard, pos) in ranking {
                let (i, ct) = outs
                    .get(shard)
                    .and_then(|o| o.eids.get(pos))
                    .ok_or_else(|| Error::protocol(format!("ranking names shard {shard} position {pos}")))?;
                ids.extend(decrypt_results(&self.keys, &subs[*i].s_term, shard, &[*ct])?);
            }
            ids
        } else {
            let mut ids = Vec::with_capacity(matches);
            for (j, o) in outs.iter().enumerate() {
                for (i, ct) in &o.eids {
                    ids.extend(decrypt_results(&self.keys, &subs[*i].s_term, j, &[*ct])?);
                }
            }
            ids
        };
        trace.push(RoundTrace { session, subqueries: subs.len(), sorted, matches, ids: ids.clone() });
        Ok(ids)
    }

    /// Dials shard `j` in each cluster the round needs. A missing
    /// counterpart on a ranked round is degraded service.
    fn connect(&self, j: usize, session: u64, begin: &QueryBegin) -> Result<Vec<Box<dyn Channel>>> {
        let mut chans: Vec<Box<dyn Channel>> = Vec::new();
        for cluster in 0..if begin.sorted { 2u8 } else { 1 } {
            let addr = self.topology.addr(cluster, j);
            let mut ch = match self.net.dial(addr) {
                Ok(c) => c,
                Err(_) if cluster == 1 => return Err(Error::Degraded),
                Err(e) => return Err(Error::Partial { shards: vec![j], reason: format!("{addr}: {e}") }),
            };
            let hello = Hello { kind: HelloKind::FrontEnd, cluster: 0xff, shard: j as u32 };
            send_msg(&mut *ch, MsgType::Hello, session, hello.encode())?;
            chans.push(ch);
        }
        Ok(chans)
    }

    fn shard_round(
        &self,
        j: usize,
        mut chans: Vec<Box<dyn Channel>>,
        session: u64,
        begin: &QueryBegin,
        subs: &[Subquery],
    ) -> Result<ShardOut> {
        let partial = |reason: String| Error::Partial { shards: vec![j], reason };
        for ch in chans.iter_mut() {
            send_msg(&mut **ch, MsgType::QueryBegin, session, begin.encode())?;
        }
        let recv = |ch: &mut Box<dyn Channel>, want: MsgType| -> Result<Frame> {
            let f = ch.recv_timeout(self.timeout).map_err(|e| match e {
                TransportError::Timeout => partial(format!("no answer within {:?}", self.timeout)),
                other => partial(other.to_string()),
            })?;
            match f.msg_type {
                t if t == want => Ok(f),
                MsgType::Error => Err(decode_error(&f.payload)),
                t => Err(Error::protocol(format!("expected {want:?}, got {t:?}"))),
            }
        };
        let mut eids = Vec::new();
        for (i, sq) in subs.iter().enumerate() {
            let msg = SubqueryMsg {
                stag: stag_derive(&self.keys, &sq.s_term),
                x_terms: sq.x_terms.len() as u16,
                negate: sq.negate,
                formula: sq.formula.clone(),
            };
            let payload = msg.encode();
            for ch in chans.iter_mut() {
                send_msg(&mut **ch, MsgType::Subquery, session, payload.clone())?;
            }
            let mut count = None;
            for ch in chans.iter_mut() {
                let c = decode_count(&recv(ch, MsgType::TupleCount)?.payload)?;
                if count.is_some_and(|n| n != c) {
                    return Err(Error::Integrity { shard: j });
                }
                count = Some(c);
            }
            let rows = if sq.x_terms.is_empty() { 0 } else { count.unwrap_or(0) };
            let xt = encode_xtokens(&xtoken_rows(&self.keys, &sq.s_term, &sq.x_terms, rows), sq.x_terms.len());
            for ch in chans.iter_mut() {
                send_msg(&mut **ch, MsgType::Xtokens, session, xt.clone())?;
            }
            let found = decode_eids(&recv(&mut chans[0], MsgType::Result)?.payload)?;
            if let Some(ch) = chans.get_mut(1) {
                if decode_count(&recv(ch, MsgType::Result)?.payload)? != found.len() {
                    return Err(Error::Integrity { shard: j });
                }
            }
            eids.extend(found.into_iter().map(|c| (i, c)));
        }
        for ch in chans.iter_mut() {
            send_msg(&mut **ch, MsgType::QueryEnd, session, Vec::new())?;
        }
        let ranking = if begin.sorted && j == 0 {
            Some(decode_ranking(&recv(&mut chans[0], MsgType::Ranking)?.payload)?)
        } else {
            None
        };
        for ch in chans.iter_mut() {
            recv(ch, MsgType::QueryEnd)?;
        }
        Ok(ShardOut { eids, ranking })
    }
}

/// The most specific failure wins; timeouts from several shards are
/// reported together.
fn merge_errors(outs: Vec<Result<ShardOut>>) -> Result<Vec<ShardOut>> {
    let mut ok = Vec::with_capacity(outs.len());
    let mut errors = Vec::new();
    for o in outs {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        return Ok(ok);
    }
    if errors.iter().any(|e| matches!(e, Error::Degraded)) {
        return Err(Error::Degraded);
    }
    if let Some(i) = errors.iter().position(|e| !matches!(e, Error::Partial { .. })) {
        return Err(errors.swap_remove(i));
    }
    let mut shards = Vec::new();
    let mut reasons = Vec::new();
    for e in errors {
        if let Error::Partial { shards: s, reason } = e {
            shards.extend(s);
            reasons.push(reason);
        }
    }
    shards.sort();
    Err(Error::Partial { shards, reason: reasons.join("; ") })
}
