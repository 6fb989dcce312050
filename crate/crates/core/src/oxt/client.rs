use crate::crypto::{decrypt_id, term_key, xtoken_compute, Ciphertext, GroupContext, MasterKeyBundle, XToken};
use crate::error::{Error, Result};
use crate::graph::{EntityId, IndexingTerm};
use crate::planner::SExpr;

/// Front-end xtokens for tuples `1..=count` of `s_term`'s list.
pub fn xtoken_rows(
    keys: &MasterKeyBundle,
    s_term: &IndexingTerm,
    x_terms: &[IndexingTerm],
    count: usize,
) -> Vec<Vec<XToken>> {
    let ctx = GroupContext::new();
    (1..=count as u64)
        .map(|c| x_terms.iter().map(|x| xtoken_compute(keys, &ctx, s_term, c, x)).collect())
        .collect()
}

/// Decrypts one shard's result ids; a ciphertext that fails to
/// authenticate is reported against that shard.
pub fn decrypt_results(
    keys: &MasterKeyBundle,
    s_term: &IndexingTerm,
    shard: usize,
    e_ids: &[Ciphertext],
) -> Result<Vec<EntityId>> {
    let k = term_key(keys, s_term);
    e_ids
        .iter()
        .map(|ct| decrypt_id(&k, ct).map_err(|_| Error::Integrity { shard }))
        .collect()
}

/// `(or t1 .. tn)` as n pairwise-disjoint subqueries:
/// `(difference t1 (or t2..tn))`, .., `(difference t_{n-1} tn)`, `tn`.
pub fn or_rewrite(children: &[SExpr]) -> Vec<SExpr> {
    let n = children.len();
    (0..n)
        .map(|i| {
            let rest = &children[i + 1..];
            match rest.len() {
                0 => children[i].clone(),
                1 => SExpr::Difference(vec![children[i].clone(), rest[0].clone()]),
                _ => SExpr::Difference(vec![children[i].clone(), SExpr::Or(rest.to_vec())]),
            }
        })
        .collect()
}
