use std::collections::{BTreeMap, BTreeSet};

use super::index::InvertedIndex;
use super::model::{EntityId, IndexingTerm};
use crate::error::{Error, Result};
use crate::planner::{anchor_child, instantiate, or_operands, Filter, QueryRequest, SExpr};

/// `src` leaf value per indexing term for score formulas.
pub type TermWeights = BTreeMap<IndexingTerm, u32>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScoredId {
    pub id: EntityId,
    pub score: u32,
}

/// Terms whose posting lists together contain every result of `expr`:
/// a term covers itself, a conjunction its anchor operand, a difference its
/// first operand, a disjunction the union of its operands' covers.
pub fn cover_terms(expr: &SExpr) -> Result<Vec<IndexingTerm>> {
    let mut out = Vec::new();
    cover_into(expr, &mut out)?;
    Ok(out)
}

fn cover_into(expr: &SExpr, out: &mut Vec<IndexingTerm>) -> Result<()> {
    match expr {
        SExpr::Term(t) => {
            if !out.contains(t) {
                out.push(t.clone());
            }
            Ok(())
        }
        SExpr::And(c) => cover_into(&c[anchor(c, expr)?], out),
        SExpr::Difference(c) => cover_into(&c[0], out),
        SExpr::Or(c) => c.iter().try_for_each(|e| cover_into(e, out)),
        SExpr::Apply { .. } => Err(Error::Plan("apply must be the outermost operator".into())),
        SExpr::Slot => Err(Error::Plan("unfilled template slot".into())),
    }
}

fn anchor(c: &[SExpr], expr: &SExpr) -> Result<usize> {
    anchor_child(c).ok_or_else(|| Error::Plan(format!("no operand of {expr} can anchor the conjunction")))
}

/// Direct set-algebra evaluation over the plaintext index. This is the
/// reference every encrypted result is compared with, and the baseline for
/// throughput measurements.
pub struct PlainEngine<'a> {
    index: &'a InvertedIndex,
}

impl<'a> PlainEngine<'a> {
    pub fn new(index: &'a InvertedIndex) -> Self {
        PlainEngine { index }
    }

    fn ids(&self, t: &IndexingTerm) -> BTreeSet<EntityId> {
        self.index.get(t).map(|l| l.ids().collect()).unwrap_or_default()
    }

    pub fn eval_set(&self, expr: &SExpr) -> Result<BTreeSet<EntityId>> {
        Ok(match expr {
            SExpr::Term(t) => self.ids(t),
            SExpr::And(c) => {
                let mut acc = self.eval_set(&c[0])?;
                for e in &c[1..] {
                    let s = self.eval_set(e)?;
                    acc.retain(|id| s.contains(id));
                }
                acc
            }
            SExpr::Or(c) => {
                let mut acc = BTreeSet::new();
                for e in c {
                    acc.extend(self.eval_set(e)?);
                }
                acc
            }
            SExpr::Difference(c) => {
                let mut acc = self.eval_set(&c[0])?;
                for e in &c[1..] {
                    for id in self.eval_set(e)? {
                        acc.remove(&id);
                    }
                }
                acc
            }
            SExpr::Apply { .. } | SExpr::Slot => {
                return Err(Error::Plan("apply must be the outermost operator".into()))
            }
        })
    }

    /// Term whose sort-key scores each id of `ids` (all results of `expr`):
    /// the anchor of a conjunction, the first operand of a difference, and
    /// for a disjunction the last operand containing the id.
    fn score_terms(
        &self,
        expr: &SExpr,
        ids: &BTreeSet<EntityId>,
        out: &mut BTreeMap<EntityId, IndexingTerm>,
    ) -> Result<()> {
        match expr {
            SExpr::Term(t) => {
                out.extend(ids.iter().map(|id| (*id, t.clone())));
                Ok(())
            }
            SExpr::And(c) => self.score_terms(&c[anchor(c, expr)?], ids, out),
            SExpr::Difference(c) => self.score_terms(&c[0], ids, out),
            SExpr::Or(c) => {
                let ops = or_operands(c);
                let sets = ops.iter().map(|e| self.eval_set(e)).collect::<Result<Vec<_>>>()?;
                let mut groups = vec![BTreeSet::new(); ops.len()];
                for id in ids {
                    let i = sets.iter().rposition(|s| s.contains(id)).expect("result lies in some operand");
                    groups[i].insert(*id);
                }
                for (e, g) in ops.iter().zip(&groups) {
                    if !g.is_empty() {
                        self.score_terms(e, g, out)?;
                    }
                }
                Ok(())
            }
            SExpr::Apply { .. } | SExpr::Slot => Err(Error::Plan("apply must be the outermost operator".into())),
        }
    }

    /// Single-round evaluation.
    pub fn evaluate(&self, expr: &SExpr, filter: &Filter, weights: &TermWeights) -> Result<Vec<ScoredId>> {
        let set = self.eval_set(expr)?;
        let mut terms = BTreeMap::new();
        self.score_terms(expr, &set, &mut terms)?;
        let mut out = Vec::with_capacity(set.len());
        for (id, term) in terms {
            let key = self
                .index
                .get(&term)
                .and_then(|l| l.sort_key_of(id))
                .expect("scoring term lists the id");
            let src = weights.get(&term).copied().unwrap_or(1);
            let score = filter
                .formula
                .as_ref()
                .map_or(key, |f| f.eval_plain(key, src));
            out.push(ScoredId { id, score });
        }
        rank(&mut out, filter);
        Ok(out)
    }

    /// Full pipeline including apply rounds.
    pub fn query(&self, req: &QueryRequest) -> Result<Vec<ScoredId>> {
        if req.rounds() > req.max_rounds {
            return Err(Error::Plan(format!(
                "query needs {} rounds, limit is {}",
                req.rounds(),
                req.max_rounds
            )));
        }
        self.run(&req.expr, &req.filter, req, &req.weights)
    }

    fn run(&self, expr: &SExpr, filter: &Filter, req: &QueryRequest, weights: &TermWeights) -> Result<Vec<ScoredId>> {
        match expr {
            SExpr::Apply { prefix, inner } => {
                let nested = self.run(inner, &req.nested_filter, req, weights)?;
                let ids: Vec<EntityId> = nested.iter().map(|s| s.id).collect();
                let round_weights = apply_weights(prefix, &ids, &req.nested_filter);
                match instantiate(&req.template, prefix, &ids) {
                    Some(e) => self.evaluate(&e, filter, &round_weights),
                    None => Ok(Vec::new()),
                }
            }
            _ => self.evaluate(expr, filter, weights),
        }
    }
}

/// Weights for an apply round: rank-derived (n, n-1, .., 1) when the nested
/// round was ranked, otherwise 1.
pub fn apply_weights(prefix: &str, ids: &[EntityId], nested: &Filter) -> TermWeights {
    let n = ids.len() as u32;
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            let w = if nested.is_sorted() { n - i as u32 } else { 1 };
            (IndexingTerm::new(prefix, *id), w)
        })
        .collect()
}

/// Sorted filters: descending score, ascending id on ties, then top-k.
/// Unsorted: ascending id.
pub(crate) fn rank(out: &mut Vec<ScoredId>, filter: &Filter) {
    if filter.is_sorted() {
        out.sort_by(|a, b| b.score.cmp(&a.score).then(a.id.cmp(&b.id)));
        if let Some(k) = filter.top_k {
            out.truncate(k);
        }
    } else {
        out.sort_by_key(|s| s.id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_inverted_index, parse_edge_list, Graph, WeightPolicy};
    use crate::planner::{parse_sexpr, ScoreFormula};

    fn fixture() -> InvertedIndex {
        let text = "1 2 10\n1 3 20\n1 4 30\n2 3 5\n2 4 50\n2 5 60\n3 2 7\n3 3 8\n3 7 9\n";
        let mut g = Graph::new();
        parse_edge_list(text.as_bytes(), "friend", WeightPolicy::FromFile, &mut g).unwrap();
        build_inverted_index(&g)
    }

    fn ids(r: &[ScoredId]) -> Vec<u64> {
        r.iter().map(|s| s.id.0).collect()
    }

    #[test]
    fn set_operators() {
        let idx = fixture();
        let e = PlainEngine::new(&idx);
        let q = |s: &str| {
            let req = QueryRequest::parse(s).unwrap();
            ids(&e.query(&req).unwrap())
        };
        assert_eq!(q("(and friend:1 friend:2)"), vec![3, 4]);
        assert_eq!(q("(difference friend:3 (and friend:1 friend:2))"), vec![2, 7]);
        assert_eq!(q("(term friend:99)"), Vec::<u64>::new());
        assert_eq!(q("(or friend:1 friend:3)"), vec![2, 3, 4, 7]);
    }

    #[test]
    fn sorted_scores_use_last_cover_term() {
        let idx = fixture();
        let e = PlainEngine::new(&idx);
        let req = QueryRequest::parse("(or friend:1 friend:2)").unwrap().filter(Filter::sorted());
        let r = e.query(&req).unwrap();
        // 3 and 4 are in both lists, so their keys come from friend:2.
        assert_eq!(
            r.iter().map(|s| (s.id.0, s.score)).collect::<Vec<_>>(),
            vec![(5, 60), (4, 50), (2, 10), (3, 5)]
        );
        let top = e.query(&req.clone().filter(Filter::top_k(2))).unwrap();
        assert_eq!(ids(&top), vec![5, 4]);
    }

    #[test]
    fn apply_two_rounds() {
        let idx = fixture();
        let e = PlainEngine::new(&idx);
        let req = QueryRequest::parse("(apply friend: friend:1)").unwrap();
        // friend:1 = {2,3,4}; friends of those = {3,4,5} u {2,3,7}
        assert_eq!(ids(&e.query(&req).unwrap()), vec![2, 3, 4, 5, 7]);
        let nested = req.clone().nested(Filter::top_k(1));
        // top friend of 1 is 4, who has no list
        assert!(e.query(&nested).unwrap().is_empty());
    }

    #[test]
    fn formula_scores() {
        let idx = fixture();
        let e = PlainEngine::new(&idx);
        let f = ScoreFormula::parse("(* key 2)").unwrap();
        let r = e
            .evaluate(&parse_sexpr("friend:1").unwrap(), &Filter::sorted().with_formula(f), &TermWeights::new())
            .unwrap();
        assert_eq!(r[0], ScoredId { id: EntityId(4), score: 60 });
    }

    #[test]
    fn apply_must_be_outermost() {
        let idx = fixture();
        let e = PlainEngine::new(&idx);
        let req = QueryRequest::parse("(and friend:1 (apply friend: friend:2))").unwrap();
        assert!(matches!(e.query(&req), Err(Error::Plan(_))));
    }
}
