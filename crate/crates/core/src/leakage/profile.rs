use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::edb::PartitionConfig;
use crate::error::Result;
use crate::graph::{apply_weights, EntityId, IndexingTerm, InvertedIndex, TermWeights};
use crate::planner::{instantiate, plan, Filter, QueryPlan, QueryRequest, ScoreFormula, Subquery};

/// What one subquery lets a server learn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubqueryLeakage {
    pub s_term: IndexingTerm,
    /// Equality class of the s-term over the whole workload.
    pub s_class: usize,
    pub phi: String,
    pub negate: bool,
    pub xp: usize,
    pub sp: usize,
    pub sp_shards: Vec<usize>,
    /// Blocks read per shard, `ceil(SP_j / B)`.
    pub blocks: Vec<usize>,
    /// `DB(s) ∩ DB(x_i)` per x-term.
    pub rp: Vec<BTreeSet<EntityId>>,
    /// Exact matching tuples per shard.
    pub matches: Vec<usize>,
}

/// One broadcast round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundLeakage {
    pub sorted: bool,
    pub top_k: Option<usize>,
    pub formula: Option<ScoreFormula>,
    pub weights: Vec<u32>,
    pub subqueries: Vec<SubqueryLeakage>,
    /// Per shard, the score of every match in position order.
    pub scores: Vec<Vec<u32>>,
    /// `(shard, position)` best first, ties by shard then position; empty
    /// for unsorted rounds.
    pub ranks: Vec<(usize, usize)>,
    /// Derived from a ranking whose tie order is not fixed, so subquery
    /// order and weights may differ from a run.
    pub ambiguous: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryLeakage {
    pub rounds: Vec<RoundLeakage>,
}

/// Two subqueries with different s-terms and a shared x-term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IpEntry {
    /// Global subquery indices in execution order.
    pub a: usize,
    pub b: usize,
    pub ids: BTreeSet<EntityId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeakageProfile {
    pub n: usize,
    pub shards: usize,
    pub block_size: usize,
    pub queries: Vec<QueryLeakage>,
    /// s-term class of every subquery in execution order.
    pub s_bar: Vec<usize>,
    pub ip: Vec<IpEntry>,
}

impl LeakageProfile {
    pub fn rounds(&self) -> impl Iterator<Item = &RoundLeakage> {
        self.queries.iter().flat_map(|q| &q.rounds)
    }
}

struct Ctx<'a> {
    index: &'a InvertedIndex,
    cfg: &'a PartitionConfig,
    classes: HashMap<IndexingTerm, usize>,
    s_bar: Vec<usize>,
    all: Vec<(IndexingTerm, Vec<IndexingTerm>)>,
}

/// Leakage of running `queries` in order against `index` partitioned by
/// `cfg`. Uses the plaintext data only.
pub fn compute_leakage(index: &InvertedIndex, queries: &[QueryRequest], cfg: &PartitionConfig) -> Result<LeakageProfile> {
    cfg.validate()?;
    let mut ctx = Ctx { index, cfg, classes: HashMap::new(), s_bar: Vec::new(), all: Vec::new() };
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let p = plan(&q.expr, &q.filter, &q.nested_filter, q.max_rounds)?;
        let mut rounds = Vec::new();
        ctx.execute(&p, q, &q.weights, false, &mut rounds)?;
        out.push(QueryLeakage { rounds });
    }
    let ip = intersection_pattern(index, &ctx.all);
    Ok(LeakageProfile {
        n: index.total_entries(),
        shards: cfg.shards,
        block_size: cfg.block_size,
        queries: out,
        s_bar: ctx.s_bar,
        ip,
    })
}

impl Ctx<'_> {
    fn execute(
        &mut self,
        p: &QueryPlan,
        req: &QueryRequest,
        weights: &TermWeights,
        ambiguous: bool,
        rounds: &mut Vec<RoundLeakage>,
    ) -> Result<(Vec<EntityId>, bool)> {
        let Some(ap) = &p.apply else {
            return self.round(&p.subqueries, &p.filter, weights, ambiguous, rounds);
        };
        let (mut ids, tied) = self.execute(&ap.nested, req, weights, ambiguous, rounds)?;
        if !req.nested_filter.is_sorted() {
            ids.sort();
        }
        let Some(e) = instantiate(&req.template, &ap.prefix, &ids) else {
            return Ok((Vec::new(), tied));
        };
        let w = apply_weights(&ap.prefix, &ids, &req.nested_filter);
        let outer = plan(&e, &p.filter, &req.nested_filter, 1)?;
        self.round(&outer.subqueries, &p.filter, &w, tied, rounds)
    }

    fn list(&self, t: &IndexingTerm) -> Vec<(u32, EntityId)> {
        self.index
            .get(t)
            .map(|l| l.entries.iter().map(|p| (p.sort_key, p.id)).collect())
            .unwrap_or_default()
    }

    fn member(&self, t: &IndexingTerm) -> BTreeSet<EntityId> {
        self.list(t).into_iter().map(|(_, id)| id).collect()
    }

    /// Returns the round's decrypted output and whether its order had ties
    /// a run may break differently.
    fn round(
        &mut self,
        subs: &[Subquery],
        filter: &Filter,
        weights: &TermWeights,
        ambiguous: bool,
        rounds: &mut Vec<RoundLeakage>,
    ) -> Result<(Vec<EntityId>, bool)> {
        let shards = self.cfg.shards;
        let mut scores = vec![Vec::new(); shards];
        let mut owners: Vec<Vec<EntityId>> = vec![Vec::new(); shards];
        let mut leak = Vec::with_capacity(subs.len());
        let w: Vec<u32> = subs.iter().map(|s| weights.get(&s.s_term).copied().unwrap_or(1)).collect();
        for (i, sq) in subs.iter().enumerate() {
            let next = self.classes.len();
            let class = *self.classes.entry(sq.s_term.clone()).or_insert(next);
            self.s_bar.push(class);
            self.all.push((sq.s_term.clone(), sq.x_terms.clone()));
            let xs: Vec<BTreeSet<EntityId>> = sq.x_terms.iter().map(|x| self.member(x)).collect();
            let list = self.list(&sq.s_term);
            let mut sp_shards = vec![0usize; shards];
            let mut matches = vec![0; shards];
            for (key, id) in &list {
                let j = self.cfg.hasher.shard_of(*id, shards)?;
                sp_shards[j] += 1;
                let v: Vec<bool> = xs.iter().map(|x| x.contains(id)).collect();
                if sq.formula.eval(&v) != sq.negate {
                    matches[j] += 1;
                    let score = filter.formula.as_ref().map_or(*key, |f| f.eval_plain(*key, w[i]));
                    scores[j].push(score);
                    owners[j].push(*id);
                }
            }
            let s_ids: BTreeSet<EntityId> = list.iter().map(|(_, id)| *id).collect();
            leak.push(SubqueryLeakage {
                s_term: sq.s_term.clone(),
                s_class: class,
                phi: sq.formula.shape(),
                negate: sq.negate,
                xp: sq.x_terms.len(),
                sp: list.len(),
                blocks: sp_shards.iter().map(|n: &usize| n.div_ceil(self.cfg.block_size)).collect(),
                sp_shards,
                rp: xs.iter().map(|x| s_ids.intersection(x).copied().collect()).collect(),
                matches,
            });
        }
        let sorted = filter.is_sorted();
        let (ranks, tied, ids) = if sorted {
            let mut all: Vec<(u32, usize, usize)> = scores
                .iter()
                .enumerate()
                .flat_map(|(j, v)| v.iter().enumerate().map(move |(p, s)| (*s, j, p)))
                .collect();
            all.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let k = filter.top_k.map_or(all.len(), |k| k.min(all.len()));
            let tied = ranking_tied(&all, k);
            let ranks: Vec<(usize, usize)> = all[..k].iter().map(|(_, j, p)| (*j, *p)).collect();
            let ids = ranks.iter().map(|(j, p)| owners[*j][*p]).collect();
            (ranks, tied, ids)
        } else {
            let ids = owners.iter().flatten().copied().collect();
            (Vec::new(), false, ids)
        };
        rounds.push(RoundLeakage {
            sorted,
            top_k: filter.top_k,
            formula: filter.formula.clone(),
            weights: w,
            subqueries: leak,
            scores,
            ranks,
            ambiguous,
        });
        Ok((ids, ambiguous || tied))
    }
}

/// True when equal scores make the first `k` entries' order or membership
/// depend on tie breaking.
fn ranking_tied(sorted: &[(u32, usize, usize)], k: usize) -> bool {
    let upto = (k + 1).min(sorted.len());
    sorted[..upto].windows(2).any(|w| w[0].0 == w[1].0)
}

/// `DB(s_a) ∩ DB(s_b)` for every pair with different s-terms sharing an
/// x-term.
fn intersection_pattern(index: &InvertedIndex, all: &[(IndexingTerm, Vec<IndexingTerm>)]) -> Vec<IpEntry> {
    let mut by_x: BTreeMap<&IndexingTerm, Vec<usize>> = BTreeMap::new();
    for (i, (_, xs)) in all.iter().enumerate() {
        for x in xs {
            by_x.entry(x).or_default().push(i);
        }
    }
    let ids = |t: &IndexingTerm| -> BTreeSet<EntityId> {
        index.get(t).map(|l| l.entries.iter().map(|p| p.id).collect()).unwrap_or_default()
    };
    let mut pairs = BTreeSet::new();
    for users in by_x.values() {
        for (n, &a) in users.iter().enumerate() {
            for &b in &users[n + 1..] {
                if a != b && all[a].0 != all[b].0 {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    pairs
        .into_iter()
        .map(|(a, b)| IpEntry { a, b, ids: ids(&all[a].0).intersection(&ids(&all[b].0)).copied().collect() })
        .collect()
}
