use std::sync::Arc;

use rand_chacha::ChaCha20Rng;

use super::{fresh_rng, Shared};
use crate::error::{Error, Result};
use crate::gc::{global_sort_evaluator, global_sort_garbler, index_bits, local_sort_evaluator, local_sort_garbler};
use crate::mpc::{
    acquire_follower, acquire_leader, combine_scalars, mul, ring_add, ring_mul, RingMatrix, ShareMatrix, SCALAR,
};
use crate::oxt::{decode_xtokens, filter_tuples, index_access};
use crate::planner::ScoreFormula;
use crate::proto::{
    decode_mask_forward, decode_sort_forward, encode_count, encode_eids, encode_error, encode_mask_forward,
    encode_ranking, encode_sort_forward, HelloKind, QueryBegin, SubqueryMsg,
};
use crate::transport::{send_msg, Channel, Frame, MsgType};

fn next(s: &Shared, ch: &mut dyn Channel, want: MsgType) -> Result<Frame> {
    let f = ch.recv_timeout(s.timeout())?;
    if f.msg_type == want {
        return Ok(f);
    }
    Err(Error::protocol(format!("expected {want:?}, got {:?}", f.msg_type)))
}

/// Matching tuples of one round, in subquery then tuple order.
struct Matches {
    shares: Vec<u32>,
    weights: Vec<u32>,
}

/// Serves one front-end round. Any failure is reported to the front-end
/// with an ERROR frame and ends the session.
pub(crate) fn front_end(s: &Arc<Shared>, mut ch: Box<dyn Channel>, session: u64) -> Result<()> {
    match run_round(s, &mut *ch, session) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = send_msg(&mut *ch, MsgType::Error, session, encode_error(&e));
            Err(e)
        }
    }
}

fn run_round(s: &Arc<Shared>, ch: &mut dyn Channel, session: u64) -> Result<()> {
    let begin = QueryBegin::decode(&next(s, ch, MsgType::QueryBegin)?.payload)?;
    let edb = &s.store.edb;
    let mut m = Matches { shares: Vec::new(), weights: Vec::new() };
    for i in 0..begin.subqueries as usize {
        let sq = SubqueryMsg::decode(&next(s, ch, MsgType::Subquery)?.payload)?;
        let tuples = index_access(&edb.tset, &sq.stag)?;
        send_msg(ch, MsgType::TupleCount, session, encode_count(tuples.len()))?;
        let xtokens = decode_xtokens(&next(s, ch, MsgType::Xtokens)?.payload)?;
        let want_rows = if sq.x_terms == 0 { 0 } else { tuples.len() };
        if xtokens.len() != want_rows || xtokens.iter().any(|r| r.len() != sq.x_terms as usize) {
            return Err(Error::protocol("xtoken block does not match the tuple count and x-term arity"));
        }
        let keep = filter_tuples(&tuples, &edb.xset, &sq.formula, sq.negate, &xtokens, &s.counters)?;
        let payload = if s.id.cluster == 0 {
            encode_eids(&keep.iter().map(|c| tuples[*c].e_id).collect::<Vec<_>>())
        } else {
            encode_count(keep.len())
        };
        send_msg(ch, MsgType::Result, session, payload)?;
        for c in keep {
            m.shares.push(tuples[c].share);
            m.weights.push(begin.weights[i]);
        }
    }
    next(s, ch, MsgType::QueryEnd)?;
    if begin.sorted {
        sort_stage(s, ch, session, &begin, &m)?;
    }
    send_msg(ch, MsgType::QueryEnd, session, Vec::new())?;
    Ok(())
}

/// Arithmetic with the counterpart, local sort, forwarding, and for the
/// coordinators the global sort.
fn sort_stage(s: &Arc<Shared>, fe: &mut dyn Channel, session: u64, begin: &QueryBegin, m: &Matches) -> Result<()> {
    let n = m.shares.len();
    if n > s.cfg.server.max_sort_k {
        return Err(Error::Config(format!(
            "shard {} holds {n} matches, above the local sort limit {}",
            s.id.shard, s.cfg.server.max_sort_k
        )));
    }
    let mut rng = fresh_rng();
    let mut pair = if s.id.cluster == 0 {
        s.dial(1, s.id.shard, HelloKind::Counterpart, session).map_err(|e| {
            log::warn!("{}: counterpart unreachable: {e}", s.id.name());
            Error::Degraded
        })?
    } else {
        s.rendezvous.wait(session, HelloKind::Counterpart, s.timeout()).ok_or(Error::Degraded)?
    };
    let formula = begin.formula.clone().unwrap_or(ScoreFormula::Key);
    let scores = eval_formula(s, &mut *pair, session, &formula, m, &mut rng)?;
    let outputs = begin.top_k.map_or(n, |k| (k as usize).min(n));
    let (kind, payload) = if s.id.cluster == 0 {
        let masks = if n == 0 {
            Vec::new()
        } else {
            local_sort_garbler(&mut *pair, session, &scores, outputs, &s.cache, &mut rng)?
        };
        (MsgType::MaskForward, encode_mask_forward(s.id.shard, &masks))
    } else {
        let sorted = if n == 0 {
            Vec::new()
        } else {
            local_sort_evaluator(&mut *pair, session, &scores, &s.cache, &mut rng)?
        };
        (MsgType::SortForward, encode_sort_forward(s.id.shard, &sorted))
    };
    drop(pair);
    if s.id.is_coordinator() {
        s.inbox.deposit(session, 0, kind, payload);
    } else {
        let mut c = s.dial(s.id.cluster, 0, HelloKind::Forward, session)?;
        send_msg(&mut *c, kind, session, payload)?;
    }
    if !s.id.is_coordinator() {
        return Ok(());
    }
    let shards = s.cfg.topology.shards();
    let contributions = s.inbox.collect(session, shards, kind, s.timeout())?;
    if s.id.cluster == 1 {
        let mut lists = Vec::with_capacity(shards);
        for (j, p) in contributions.iter().enumerate() {
            let (from, list) = decode_sort_forward(p)?;
            if from != j {
                return Err(Error::protocol(format!("slot {j} holds shard {from}'s vector")));
            }
            lists.push(list);
        }
        let total: usize = lists.iter().map(|l| l.len()).sum();
        if total > 0 {
            let outputs = begin.top_k.map_or(total, |k| (k as usize).min(total));
            let mut g = s.dial(0, 0, HelloKind::Global, session)?;
            global_sort_garbler(&mut *g, session, &lists, outputs, position_bits(s), &mut rng)?;
        }
    } else {
        let mut masks = Vec::with_capacity(shards);
        for (j, p) in contributions.iter().enumerate() {
            let (from, list) = decode_mask_forward(p)?;
            if from != j {
                return Err(Error::protocol(format!("slot {j} holds shard {from}'s masks")));
            }
            masks.push(list);
        }
        let total: usize = masks.iter().map(|l| l.len()).sum();
        let ranking = if total > 0 {
            let mut g = s
                .rendezvous
                .wait(session, HelloKind::Global, s.timeout())
                .ok_or_else(|| Error::Partial { shards: vec![0], reason: "global sort garbler did not connect".into() })?;
            global_sort_evaluator(&mut *g, session, &masks, position_bits(s), &mut rng)?
                .into_iter()
                .map(|(pos, shard)| (shard, pos))
                .collect()
        } else {
            Vec::new()
        };
        send_msg(fe, MsgType::Ranking, session, encode_ranking(&ranking))?;
    }
    Ok(())
}

/// Width of position payloads in the global sort: enough for any shard
/// below the configured local sort limit.
fn position_bits(s: &Shared) -> usize {
    index_bits(s.cfg.server.max_sort_k)
}

enum Val {
    Public(Vec<u32>),
    Shared(Vec<u32>),
}

/// Evaluates the score formula on this party's key shares. Public operands
/// are folded locally; each shared product costs one Beaver round.
fn eval_formula(
    s: &Shared,
    ch: &mut dyn Channel,
    session: u64,
    f: &ScoreFormula,
    m: &Matches,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<u32>> {
    let party = s.id.cluster;
    Ok(match eval(s, ch, session, f, m, rng)? {
        Val::Shared(v) => v,
        Val::Public(v) if party == 0 => v,
        Val::Public(v) => vec![0; v.len()],
    })
}

fn eval(
    s: &Shared,
    ch: &mut dyn Channel,
    session: u64,
    f: &ScoreFormula,
    m: &Matches,
    rng: &mut ChaCha20Rng,
) -> Result<Val> {
    let n = m.shares.len();
    let party = s.id.cluster;
    let zip = |a: &[u32], b: &[u32], op: fn(u32, u32) -> u32| a.iter().zip(b).map(|(x, y)| op(*x, *y)).collect();
    Ok(match f {
        ScoreFormula::Key => Val::Shared(m.shares.clone()),
        ScoreFormula::Src => Val::Public(m.weights.clone()),
        ScoreFormula::Const(c) => Val::Public(vec![*c; n]),
        ScoreFormula::Add(a, b) => {
            let a = eval(s, ch, session, a, m, rng)?;
            let b = eval(s, ch, session, b, m, rng)?;
            match (a, b) {
                (Val::Public(x), Val::Public(y)) => Val::Public(zip(&x, &y, ring_add)),
                (Val::Shared(x), Val::Shared(y)) => Val::Shared(zip(&x, &y, ring_add)),
                (Val::Shared(x), Val::Public(p)) | (Val::Public(p), Val::Shared(x)) => {
                    if party == 0 {
                        Val::Shared(zip(&x, &p, ring_add))
                    } else {
                        Val::Shared(x)
                    }
                }
            }
        }
        ScoreFormula::Mul(a, b) => {
            let a = eval(s, ch, session, a, m, rng)?;
            let b = eval(s, ch, session, b, m, rng)?;
            match (a, b) {
                (Val::Public(x), Val::Public(y)) => Val::Public(zip(&x, &y, ring_mul)),
                (Val::Shared(x), Val::Public(p)) | (Val::Public(p), Val::Shared(x)) => {
                    Val::Shared(zip(&x, &p, ring_mul))
                }
                (Val::Shared(x), Val::Shared(y)) => Val::Shared(secure_mul(s, ch, session, x, y, rng)?),
            }
        }
    })
}

fn secure_mul(
    s: &Shared,
    ch: &mut dyn Channel,
    session: u64,
    x: Vec<u32>,
    y: Vec<u32>,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<u32>> {
    let n = x.len();
    if n == 0 {
        return Ok(x);
    }
    let party = s.id.cluster;
    let triples = if party == 0 {
        acquire_leader(&s.pool, &s.source, SCALAR, n, ch, session, rng)?
    } else {
        let (shape, t) = acquire_follower(&s.pool, &s.source, ch, session, rng)?;
        if shape != SCALAR || t.len() != n {
            return Err(Error::Triple(format!("counterpart announced {} triples of {shape:?} for {n} products", t.len())));
        }
        t
    };
    let triple = combine_scalars(&triples)?;
    let a = ShareMatrix::new(party, RingMatrix::vector(x)?);
    let b = ShareMatrix::new(party, RingMatrix::vector(y)?);
    Ok(mul(&a, &b, &triple, ch, session)?.value.data)
}
