use std::collections::{BTreeMap, HashMap};

use super::audit::{parse_server_name, Violation, ViolationKind};
use super::profile::{LeakageProfile, RoundLeakage};
use crate::planner::ScoreFormula;
use crate::proto::{decode_count, decode_mask_forward, decode_ranking, decode_sort_forward, Hello, QueryBegin, SubqueryMsg};
use crate::transport::{Direction, MsgType, Transcript, TranscriptEntry};
use crate::wire::Reader;

#[derive(Clone, Debug, Default)]
pub struct Verdict {
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
    pub rounds_checked: usize,
}

impl Verdict {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Shared products a score formula needs.
fn secure_products(f: &ScoreFormula) -> usize {
    fn shared(f: &ScoreFormula) -> bool {
        match f {
            ScoreFormula::Key => true,
            ScoreFormula::Src | ScoreFormula::Const(_) => false,
            ScoreFormula::Add(a, b) | ScoreFormula::Mul(a, b) => shared(a) || shared(b),
        }
    }
    match f {
        ScoreFormula::Key | ScoreFormula::Src | ScoreFormula::Const(_) => 0,
        ScoreFormula::Add(a, b) => secure_products(a) + secure_products(b),
        ScoreFormula::Mul(a, b) => secure_products(a) + secure_products(b) + (shared(a) && shared(b)) as usize,
    }
}

fn top(k: Option<usize>, n: usize) -> usize {
    k.map_or(n, |k| k.min(n))
}

struct Checker<'a> {
    server: String,
    cluster: u8,
    shard: usize,
    out: &'a mut Verdict,
    stag_to_class: HashMap<Vec<u8>, usize>,
    class_to_stag: HashMap<usize, Vec<u8>>,
}

impl Checker<'_> {
    fn flag(&mut self, session: u64, entry: Option<usize>, detail: String) {
        self.out.violations.push(Violation {
            server: self.server.clone(),
            entry,
            session,
            kind: ViolationKind::Inconsistent,
            detail,
        });
    }

    /// Equal s-terms must give equal stags and different ones different.
    fn stag(&mut self, session: u64, entry: usize, stag: &[u8], class: usize) {
        let a = self.stag_to_class.entry(stag.to_vec()).or_insert(class);
        let b = self.class_to_stag.entry(class).or_insert_with(|| stag.to_vec());
        if *a != class || b != stag {
            self.flag(session, Some(entry), format!("stag pattern disagrees with s_bar at class {class}"));
        }
    }

    fn round(&mut self, session: u64, frames: &[(usize, &TranscriptEntry)], round: &RoundLeakage) {
        let j = self.shard;
        let mut fe = frames.iter().filter(|(_, e)| {
            matches!(
                e.frame.msg_type,
                MsgType::QueryBegin
                    | MsgType::Subquery
                    | MsgType::TupleCount
                    | MsgType::Xtokens
                    | MsgType::Result
                    | MsgType::Ranking
                    | MsgType::Error
            ) || (e.frame.msg_type == MsgType::QueryEnd)
        });
        let mut next = |want: MsgType, dir: Direction| -> Option<(usize, &TranscriptEntry)> {
            match fe.next() {
                Some((i, e)) if e.frame.msg_type == want && e.direction == dir => Some((*i, *e)),
                _ => None,
            }
        };
        let Some((i, qb)) = next(MsgType::QueryBegin, Direction::Received) else {
            return self.flag(session, None, "session does not open with QUERY_BEGIN".into());
        };
        let Ok(qb) = QueryBegin::decode(&qb.frame.payload) else {
            return self.flag(session, Some(i), "unreadable QUERY_BEGIN".into());
        };
        let n_sub = round.subqueries.len();
        if qb.subqueries as usize != n_sub
            || qb.sorted != round.sorted
            || qb.top_k.map(|k| k as usize) != round.top_k
            || qb.formula != round.formula
        {
            return self.flag(session, Some(i), "round parameters differ from the profile".into());
        }
        let mut w_obs = qb.weights.clone();
        let mut w_exp = round.weights.clone();
        if round.ambiguous {
            w_obs.sort();
            w_exp.sort();
        }
        if w_obs != w_exp {
            self.flag(session, Some(i), "src weights differ from the profile".into());
        }
        // Per subquery: (sp_j, xp, phi, negate) observed, and the result count.
        let mut observed = Vec::with_capacity(n_sub);
        let mut counts = Vec::with_capacity(n_sub);
        for s in 0..n_sub {
            let Some((i, sq)) = next(MsgType::Subquery, Direction::Received) else {
                return self.flag(session, None, format!("subquery {s} missing"));
            };
            let Ok(m) = SubqueryMsg::decode(&sq.frame.payload) else {
                return self.flag(session, Some(i), "unreadable SUBQUERY".into());
            };
            let Some((ti, tc)) = next(MsgType::TupleCount, Direction::Sent) else {
                return self.flag(session, None, format!("subquery {s}: no TUPLE_COUNT"));
            };
            let sp = decode_count(&tc.frame.payload).unwrap_or(usize::MAX);
            let Some((xi, xt)) = next(MsgType::Xtokens, Direction::Received) else {
                return self.flag(session, None, format!("subquery {s}: no XTOKENS"));
            };
            let mut r = Reader::new(&xt.frame.payload);
            let (rows, cols) = (r.u32().unwrap_or(u32::MAX) as usize, r.u16().unwrap_or(u16::MAX) as usize);
            if cols != m.x_terms as usize || rows != if m.x_terms == 0 { 0 } else { sp } {
                self.flag(session, Some(xi), format!("subquery {s}: xtoken block {rows}x{cols} for SP {sp}"));
            }
            let Some((ri, res)) = next(MsgType::Result, Direction::Sent) else {
                return self.flag(session, None, format!("subquery {s}: no RESULT"));
            };
            let found = match self.cluster {
                0 => Reader::new(&res.frame.payload).u32().map(|n| n as usize),
                _ => decode_count(&res.frame.payload),
            }
            .unwrap_or(usize::MAX);
            if !round.ambiguous {
                let exp = &round.subqueries[s];
                self.stag(session, i, &m.stag.0, exp.s_class);
                if m.x_terms as usize != exp.xp || m.negate != exp.negate || m.formula.shape() != exp.phi {
                    self.flag(session, Some(i), format!("subquery {s}: XP, phi or negation differs from the profile"));
                }
                if sp != exp.sp_shards[j] {
                    self.flag(session, Some(ti), format!("subquery {s}: SP {sp}, profile {}", exp.sp_shards[j]));
                }
                if found < exp.matches[j] || found > exp.sp_shards[j] {
                    self.flag(session, Some(ri), format!("subquery {s}: {found} results, profile {}", exp.matches[j]));
                } else if found > exp.matches[j] {
                    self.out.notes.push(format!(
                        "{} session {session:016x} subquery {s}: {} bloom false positives",
                        self.server,
                        found - exp.matches[j]
                    ));
                }
            }
            observed.push((sp, m.x_terms as usize, m.formula.shape(), m.negate));
            counts.push(found);
        }
        if round.ambiguous {
            let mut exp: Vec<_> = round
                .subqueries
                .iter()
                .map(|e| (e.sp_shards[j], e.xp, e.phi.clone(), e.negate))
                .collect();
            exp.sort();
            observed.sort();
            if exp != observed {
                self.flag(session, None, "subquery leakage differs from the profile as a multiset".into());
            }
            self.out.notes.push(format!(
                "{} session {session:016x}: round follows a tied ranking, checked up to order",
                self.server
            ));
        }
        if next(MsgType::QueryEnd, Direction::Received).is_none() {
            return self.flag(session, None, "no QUERY_END from the front-end".into());
        }
        let n_j: usize = counts.iter().sum();
        let exact = !round.ambiguous && n_j == round.scores[j].len();
        if round.sorted && self.cluster == 0 && j == 0 {
            match next(MsgType::Ranking, Direction::Sent) {
                Some((i, e)) => self.ranking(session, i, &e.frame.payload, round, exact),
                None => self.flag(session, None, "sorted round without RANKING".into()),
            }
        }
        if next(MsgType::QueryEnd, Direction::Sent).is_none() {
            self.flag(session, None, "no closing QUERY_END".into());
        }
        if let Some((i, e)) = fe.next() {
            self.flag(session, Some(*i), format!("unexpected {:?} after the round", e.frame.msg_type));
        }
        self.sort_frames(session, frames, round, n_j, exact);
    }

    fn ranking(&mut self, session: u64, i: usize, payload: &[u8], round: &RoundLeakage, exact: bool) {
        let Ok(rk) = decode_ranking(payload) else {
            return self.flag(session, Some(i), "unreadable RANKING".into());
        };
        if !exact {
            return;
        }
        let score = |(s, p): (usize, usize)| round.scores.get(s).and_then(|v| v.get(p)).copied();
        let got: Vec<Option<u32>> = rk.iter().map(|e| score(*e)).collect();
        let want: Vec<Option<u32>> = round.ranks.iter().map(|e| score(*e)).collect();
        let mut uniq = rk.clone();
        uniq.sort();
        uniq.dedup();
        if got != want || uniq.len() != rk.len() {
            self.flag(session, Some(i), "ranking disagrees with the rank leakage".into());
        }
    }

    /// Frames outside the front-end channel: arithmetic, local sort,
    /// forwarding and global sort.
    fn sort_frames(&mut self, session: u64, frames: &[(usize, &TranscriptEntry)], round: &RoundLeakage, n_j: usize, exact: bool) {
        let outputs = |s: usize| top(round.top_k, round.scores[s].len());
        let mut mul_sent = 0;
        for &(i, e) in frames {
            let t = e.frame.msg_type;
            let p = &e.frame.payload;
            let fe_side = matches!(
                t,
                MsgType::QueryBegin
                    | MsgType::Subquery
                    | MsgType::TupleCount
                    | MsgType::Xtokens
                    | MsgType::Result
                    | MsgType::Ranking
                    | MsgType::QueryEnd
                    | MsgType::Error
            );
            if fe_side {
                continue;
            }
            if !round.sorted {
                if !(t == MsgType::Hello && Hello::decode(p).is_ok_and(|h| h.cluster == 0xff)) {
                    self.flag(session, Some(i), format!("{t:?} in an unsorted round"));
                }
                continue;
            }
            match t {
                MsgType::MulExchange if e.direction == Direction::Sent => {
                    mul_sent += 1;
                    let mut r = Reader::new(p);
                    let dims = (r.u32().unwrap_or(0) as usize, r.u32().unwrap_or(0) as usize);
                    if dims != (n_j, 1) {
                        self.flag(session, Some(i), format!("product over {dims:?}, shard holds {n_j} matches"));
                    }
                }
                MsgType::SortInit if p.len() == 10 => {
                    let mut r = Reader::new(p);
                    let (k, o) = (r.u32().unwrap_or(0) as usize, r.u32().unwrap_or(0) as usize);
                    if k != n_j || o != top(round.top_k, n_j) {
                        self.flag(session, Some(i), format!("local sort of {k} into {o}, shard holds {n_j}"));
                    }
                }
                MsgType::SortInit => {
                    let mut r = Reader::new(p);
                    let counts = r.u32s().unwrap_or_default();
                    let o = r.u32().unwrap_or(0) as usize;
                    if exact {
                        let want: Vec<u32> = (0..round.scores.len()).map(|s| outputs(s) as u32).collect();
                        let total = want.iter().sum::<u32>() as usize;
                        if counts != want || o != top(round.top_k, total) {
                            self.flag(session, Some(i), "global sort sizes differ from the profile".into());
                        }
                    }
                }
                MsgType::SortForward => match decode_sort_forward(p) {
                    Ok((s, list)) if s < round.scores.len() => {
                        if exact && !self.local_order_ok(s, &list.iter().map(|e| e.1).collect::<Vec<_>>(), round) {
                            self.flag(session, Some(i), format!("shard {s} local ranking disagrees with its scores"));
                        }
                    }
                    _ => self.flag(session, Some(i), "unreadable SORT_FORWARD".into()),
                },
                MsgType::MaskForward => match decode_mask_forward(p) {
                    Ok((s, masks)) if s < round.scores.len() => {
                        if exact && masks.len() != outputs(s) {
                            self.flag(session, Some(i), format!("shard {s} forwarded {} masks", masks.len()));
                        }
                    }
                    _ => self.flag(session, Some(i), "unreadable MASK_FORWARD".into()),
                },
                MsgType::Hello
                | MsgType::MulInit
                | MsgType::MulExchange
                | MsgType::TripleGenInit
                | MsgType::TripleGenDone
                | MsgType::OtBaseSender
                | MsgType::OtBaseReceiver
                | MsgType::OtExtMatrix
                | MsgType::OtPayload
                | MsgType::CotBatch
                | MsgType::CircuitBlob
                | MsgType::GarblerLabels
                | MsgType::MaskLabels
                | MsgType::SortResult => {}
                other => self.flag(session, Some(i), format!("{other:?} not predicted by the profile")),
            }
        }
        let products = round.formula.as_ref().map_or(0, secure_products);
        let want = if n_j == 0 { 0 } else { products };
        if mul_sent != want {
            self.flag(session, None, format!("{mul_sent} share exchanges, formula needs {want}"));
        }
    }

    /// Positions are distinct, in range, and their scores are the shard's
    /// best in descending order.
    fn local_order_ok(&self, s: usize, positions: &[usize], round: &RoundLeakage) -> bool {
        let scores = &round.scores[s];
        let mut best = scores.clone();
        best.sort_by(|a, b| b.cmp(a));
        best.truncate(top(round.top_k, scores.len()));
        let got: Option<Vec<u32>> = positions.iter().map(|p| scores.get(*p).copied()).collect();
        let mut uniq = positions.to_vec();
        uniq.sort();
        uniq.dedup();
        got == Some(best) && uniq.len() == positions.len()
    }
}

/// Matches every server's query sessions, in order, against the profile's
/// rounds and checks each observable against it. Cluster-1 servers only
/// take part in ranked rounds.
pub fn check_transcript_consistency(profile: &LeakageProfile, transcripts: &[Transcript]) -> Verdict {
    let mut out = Verdict::default();
    let rounds: Vec<&RoundLeakage> = profile.rounds().collect();
    for t in transcripts {
        let Some((cluster, shard)) = parse_server_name(&t.server) else {
            out.violations.push(Violation {
                server: t.server.clone(),
                entry: None,
                session: 0,
                kind: ViolationKind::Malformed,
                detail: "unnamed transcript".into(),
            });
            continue;
        };
        if shard >= profile.shards {
            out.violations.push(Violation {
                server: t.server.clone(),
                entry: None,
                session: 0,
                kind: ViolationKind::Inconsistent,
                detail: format!("shard {shard} outside a {}-shard profile", profile.shards),
            });
            continue;
        }
        let mine: Vec<&RoundLeakage> = rounds.iter().copied().filter(|r| cluster == 0 || r.sorted).collect();
        // Sessions in order of their QUERY_BEGIN; everything else belongs to
        // the background refill session.
        let mut order: Vec<u64> = Vec::new();
        let mut by_session: BTreeMap<u64, Vec<(usize, &TranscriptEntry)>> = BTreeMap::new();
        for (i, e) in t.entries.iter().enumerate() {
            if e.frame.msg_type == MsgType::QueryBegin && e.direction == Direction::Received {
                order.push(e.frame.session);
            }
            by_session.entry(e.frame.session).or_default().push((i, e));
        }
        let mut c = Checker {
            server: t.server.clone(),
            cluster,
            shard,
            out: &mut out,
            stag_to_class: HashMap::new(),
            class_to_stag: HashMap::new(),
        };
        if order.len() != mine.len() {
            c.flag(0, None, format!("{} query sessions, profile predicts {}", order.len(), mine.len()));
        }
        for (session, round) in order.iter().zip(&mine) {
            let frames = by_session.remove(session).unwrap_or_default();
            c.round(*session, &frames, round);
            c.out.rounds_checked += 1;
        }
        for (session, frames) in by_session {
            if order.contains(&session) {
                continue;
            }
            for (i, e) in frames {
                let offline = matches!(
                    e.frame.msg_type,
                    MsgType::Hello
                        | MsgType::TripleGenInit
                        | MsgType::TripleGenDone
                        | MsgType::OtBaseSender
                        | MsgType::OtBaseReceiver
                        | MsgType::OtExtMatrix
                        | MsgType::CotBatch
                );
                if !offline {
                    c.flag(session, Some(i), format!("{:?} outside any query session", e.frame.msg_type));
                }
            }
        }
    }
    out
}
