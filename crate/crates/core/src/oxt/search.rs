use std::sync::atomic::{AtomicU64, Ordering};

use super::formula::BoolFormula;
use crate::crypto::{STag, XToken, ELEMENT_LEN};
use crate::edb::{BloomFilter, EncryptedTuple, TSetShard};
use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

/// Work counters for one server (or one test).
#[derive(Debug, Default)]
pub struct OxtCounters {
    pub exponentiations: AtomicU64,
    pub tuples_scanned: AtomicU64,
    pub xset_probes: AtomicU64,
}

impl OxtCounters {
    pub fn exponentiations(&self) -> u64 {
        self.exponentiations.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.exponentiations.store(0, Ordering::Relaxed);
        self.tuples_scanned.store(0, Ordering::Relaxed);
        self.xset_probes.store(0, Ordering::Relaxed);
    }
}

/// Everything a server needs for one boolean subquery.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenBundle {
    pub stag: STag,
    pub x_terms: usize,
    pub formula: BoolFormula,
    /// Keep tuples whose formula is false (difference).
    pub negate: bool,
    /// `xtokens[c][l]` for tuple `c+1` and x-term `l`.
    pub xtokens: Vec<Vec<XToken>>,
}

/// Fetches the tuple list for `stag`; an unknown stag is an empty list.
pub fn index_access(tset: &TSetShard, stag: &STag) -> Result<Vec<EncryptedTuple>> {
    tset.retrieve(stag)
}

/// Positions of the tuples that pass the residual formula. Every x-term is
/// tested for every tuple, so the exponentiation count is exactly
/// `tuples.len() * x_terms` whatever the data.
pub fn filter_tuples(
    tuples: &[EncryptedTuple],
    xset: &BloomFilter,
    formula: &BoolFormula,
    negate: bool,
    xtokens: &[Vec<XToken>],
    counters: &OxtCounters,
) -> Result<Vec<usize>> {
    let x_terms = xtokens.first().map_or(0, |r| r.len());
    if formula.var_bound() > x_terms && !tuples.is_empty() {
        return Err(Error::protocol(format!(
            "formula uses {} variables but {x_terms} x-terms were sent",
            formula.var_bound()
        )));
    }
    if xtokens.len() < tuples.len() && x_terms > 0 {
        return Err(Error::protocol(format!("{} xtoken rows for {} tuples", xtokens.len(), tuples.len())));
    }
    let mut out = Vec::new();
    let mut v = vec![false; x_terms];
    for (c, t) in tuples.iter().enumerate() {
        if x_terms > 0 {
            let row = &xtokens[c];
            if row.len() != x_terms {
                return Err(Error::protocol("ragged xtoken rows"));
            }
            for (l, tok) in row.iter().enumerate() {
                v[l] = xset.contains(&tok.blind(&t.y).0);
            }
            counters.exponentiations.fetch_add(x_terms as u64, Ordering::Relaxed);
            counters.xset_probes.fetch_add(x_terms as u64, Ordering::Relaxed);
        }
        counters.tuples_scanned.fetch_add(1, Ordering::Relaxed);
        if formula.eval(&v) != negate {
            out.push(c);
        }
    }
    Ok(out)
}

/// Index access followed by the residual filter; returns matching tuples
/// in stored order.
pub fn boolean_query(
    tset: &TSetShard,
    xset: &BloomFilter,
    bundle: &TokenBundle,
    counters: &OxtCounters,
) -> Result<Vec<EncryptedTuple>> {
    let tuples = index_access(tset, &bundle.stag)?;
    if bundle.xtokens.iter().any(|r| r.len() != bundle.x_terms) {
        return Err(Error::protocol("xtoken rows do not match the declared x-term count"));
    }
    let keep = filter_tuples(&tuples, xset, &bundle.formula, bundle.negate, &bundle.xtokens, counters)?;
    Ok(keep.into_iter().map(|i| tuples[i].clone()).collect())
}

/// `cols` is the x-term count; it is sent even when there are no rows.
pub fn encode_xtokens(rows: &[Vec<XToken>], cols: usize) -> Vec<u8> {
    debug_assert!(rows.iter().all(|r| r.len() == cols));
    let mut w = Writer(Vec::with_capacity(6 + rows.len() * cols * ELEMENT_LEN));
    w.u32(rows.len() as u32).u16(cols as u16);
    for r in rows {
        for t in r {
            w.bytes(&t.to_bytes());
        }
    }
    w.finish()
}

pub fn decode_xtokens(bytes: &[u8]) -> Result<Vec<Vec<XToken>>> {
    let mut r = Reader::new(bytes);
    let rows = r.u32()? as usize;
    let cols = r.u16()? as usize;
    if rows.saturating_mul(cols).saturating_mul(ELEMENT_LEN) != r.remaining() {
        return Err(Error::protocol("xtoken block has the wrong length"));
    }
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| XToken::from_bytes(r.take(ELEMENT_LEN)?).ok_or_else(|| Error::protocol("invalid xtoken")))
                .collect()
        })
        .collect()
}
