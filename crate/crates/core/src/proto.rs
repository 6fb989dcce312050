//! Payload layouts for the query, forwarding and ranking messages. The MPC,
//! OT and sorting payloads live with their protocols.

use crate::crypto::{Ciphertext, STag, CIPHERTEXT_LEN, STAG_LEN};
use crate::error::{Error, Result};
use crate::oxt::BoolFormula;
use crate::planner::ScoreFormula;
use crate::wire::{Reader, Writer};

/// First frame on every inbound connection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HelloKind {
    FrontEnd = 0,
    /// Shard-pair channel for arithmetic and local sorting.
    Counterpart = 1,
    /// One SORT_FORWARD or MASK_FORWARD frame for the coordinator.
    Forward = 2,
    /// Coordinator-to-coordinator global sort.
    Global = 3,
    /// Background triple generation.
    Refill = 4,
    Ping = 5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hello {
    pub kind: HelloKind,
    pub cluster: u8,
    pub shard: u32,
}

impl Hello {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.kind as u8).u8(self.cluster).u32(self.shard);
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Hello> {
        let mut r = Reader::new(b);
        let kind = match r.u8()? {
            0 => HelloKind::FrontEnd,
            1 => HelloKind::Counterpart,
            2 => HelloKind::Forward,
            3 => HelloKind::Global,
            4 => HelloKind::Refill,
            5 => HelloKind::Ping,
            k => return Err(Error::protocol(format!("unknown hello kind {k}"))),
        };
        let h = Hello { kind, cluster: r.u8()?, shard: r.u32()? };
        r.end()?;
        Ok(h)
    }
}

/// QUERY_BEGIN: the round's public parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryBegin {
    pub subqueries: u32,
    pub sorted: bool,
    pub top_k: Option<u32>,
    pub formula: Option<ScoreFormula>,
    /// Public `src` weight per subquery.
    pub weights: Vec<u32>,
}

impl QueryBegin {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.subqueries).u8(self.sorted as u8);
        w.u8(self.top_k.is_some() as u8).u32(self.top_k.unwrap_or(0));
        let mut f = Vec::new();
        if let Some(formula) = &self.formula {
            formula.encode(&mut f);
        }
        w.blob(&f).u32s(&self.weights);
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<QueryBegin> {
        let mut r = Reader::new(b);
        let subqueries = r.u32()?;
        let sorted = r.u8()? != 0;
        let has_k = r.u8()? != 0;
        let k = r.u32()?;
        let f = r.blob()?;
        let formula = if f.is_empty() {
            None
        } else {
            let (formula, used) = ScoreFormula::decode(f)?;
            if used != f.len() {
                return Err(Error::protocol("trailing bytes after score formula"));
            }
            Some(formula)
        };
        let weights = r.u32s()?;
        r.end()?;
        if weights.len() != subqueries as usize {
            return Err(Error::protocol("one src weight per subquery expected"));
        }
        Ok(QueryBegin { subqueries, sorted, top_k: has_k.then_some(k), formula, weights })
    }
}

/// SUBQUERY: index-access token and residual formula.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubqueryMsg {
    pub stag: STag,
    pub x_terms: u16,
    pub negate: bool,
    pub formula: BoolFormula,
}

impl SubqueryMsg {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.stag.0).u16(self.x_terms).u8(self.negate as u8).blob(&self.formula.encode());
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<SubqueryMsg> {
        let mut r = Reader::new(b);
        let stag = STag(r.take(STAG_LEN)?.try_into().unwrap());
        let x_terms = r.u16()?;
        let negate = r.u8()? != 0;
        let formula = BoolFormula::decode(r.blob()?, x_terms as usize)?;
        r.end()?;
        Ok(SubqueryMsg { stag, x_terms, negate, formula })
    }
}

pub fn encode_count(n: usize) -> Vec<u8> {
    (n as u32).to_be_bytes().to_vec()
}

pub fn decode_count(b: &[u8]) -> Result<usize> {
    let mut r = Reader::new(b);
    let n = r.u32()? as usize;
    r.end()?;
    Ok(n)
}

/// RESULT from cluster 0: matching encrypted ids in tuple order.
pub fn encode_eids(e_ids: &[Ciphertext]) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(4 + e_ids.len() * CIPHERTEXT_LEN));
    w.u32(e_ids.len() as u32);
    for e in e_ids {
        w.bytes(&e.0);
    }
    w.finish()
}

pub fn decode_eids(b: &[u8]) -> Result<Vec<Ciphertext>> {
    let mut r = Reader::new(b);
    let n = r.u32()? as usize;
    if r.remaining() != n * CIPHERTEXT_LEN {
        return Err(Error::protocol("result length disagrees with its count"));
    }
    Ok((0..n).map(|_| Ciphertext(r.take(CIPHERTEXT_LEN).unwrap().try_into().unwrap())).collect())
}

/// RANKING: `(shard, position)` best first.
pub fn encode_ranking(r: &[(usize, usize)]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(r.len() as u32);
    for (shard, pos) in r {
        w.u32(*shard as u32).u32(*pos as u32);
    }
    w.finish()
}

pub fn decode_ranking(b: &[u8]) -> Result<Vec<(usize, usize)>> {
    let mut r = Reader::new(b);
    let n = r.u32()? as usize;
    if r.remaining() != 8 * n {
        return Err(Error::protocol("ranking length disagrees with its count"));
    }
    (0..n).map(|_| Ok((r.u32()? as usize, r.u32()? as usize))).collect()
}

/// SORT_FORWARD: a shard's locally sorted `(masked score, position)` list.
pub fn encode_sort_forward(shard: usize, entries: &[(u32, usize)]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(shard as u32).u32(entries.len() as u32);
    for (s, p) in entries {
        w.u32(*s).u32(*p as u32);
    }
    w.finish()
}

pub fn decode_sort_forward(b: &[u8]) -> Result<(usize, Vec<(u32, usize)>)> {
    let mut r = Reader::new(b);
    let shard = r.u32()? as usize;
    let n = r.u32()? as usize;
    if r.remaining() != 8 * n {
        return Err(Error::protocol("forwarded vector length disagrees with its count"));
    }
    let v = (0..n).map(|_| Ok((r.u32()?, r.u32()? as usize))).collect::<Result<_>>()?;
    Ok((shard, v))
}

/// MASK_FORWARD: a shard's output masks.
pub fn encode_mask_forward(shard: usize, masks: &[u32]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(shard as u32).u32s(masks);
    w.finish()
}

pub fn decode_mask_forward(b: &[u8]) -> Result<(usize, Vec<u32>)> {
    let mut r = Reader::new(b);
    let shard = r.u32()? as usize;
    let masks = r.u32s()?;
    r.end()?;
    Ok((shard, masks))
}

const ERR_OTHER: u8 = 0;
const ERR_DEGRADED: u8 = 1;
const ERR_MISSING: u8 = 2;
const ERR_INTEGRITY: u8 = 3;

/// ERROR payload: code, shard, message.
pub fn encode_error(e: &Error) -> Vec<u8> {
    let (code, shard) = match e {
        Error::Degraded => (ERR_DEGRADED, 0),
        Error::MissingShard { shard } => (ERR_MISSING, *shard),
        Error::Integrity { shard } => (ERR_INTEGRITY, *shard),
        _ => (ERR_OTHER, 0),
    };
    let mut w = Writer::new();
    w.u8(code).u32(shard as u32).bytes(e.to_string().as_bytes());
    w.finish()
}

pub fn decode_error(b: &[u8]) -> Error {
    let mut r = Reader::new(b);
    let (Ok(code), Ok(shard)) = (r.u8(), r.u32()) else {
        return Error::protocol("malformed error frame");
    };
    let msg = String::from_utf8_lossy(r.take(r.remaining()).unwrap_or_default()).into_owned();
    match code {
        ERR_DEGRADED => Error::Degraded,
        ERR_MISSING => Error::MissingShard { shard: shard as usize },
        ERR_INTEGRITY => Error::Integrity { shard: shard as usize },
        _ => Error::protocol(format!("server error: {msg}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips() {
        let h = Hello { kind: HelloKind::Forward, cluster: 1, shard: 2 };
        assert_eq!(Hello::decode(&h.encode()).unwrap(), h);
        let qb = QueryBegin {
            subqueries: 2,
            sorted: true,
            top_k: Some(10),
            formula: Some(ScoreFormula::parse("(* key src)").unwrap()),
            weights: vec![3, 1],
        };
        assert_eq!(QueryBegin::decode(&qb.encode()).unwrap(), qb);
        let sq = SubqueryMsg {
            stag: STag([7; STAG_LEN]),
            x_terms: 2,
            negate: true,
            formula: BoolFormula::or_all(vec![BoolFormula::Var(0), BoolFormula::Var(1)]),
        };
        assert_eq!(SubqueryMsg::decode(&sq.encode()).unwrap(), sq);
        let r = vec![(1, 4), (0, 0)];
        assert_eq!(decode_ranking(&encode_ranking(&r)).unwrap(), r);
        let f = vec![(99, 1), (5, 0)];
        assert_eq!(decode_sort_forward(&encode_sort_forward(2, &f)).unwrap(), (2, f));
        assert_eq!(decode_mask_forward(&encode_mask_forward(1, &[4, 5])).unwrap(), (1, vec![4, 5]));
        assert!(matches!(decode_error(&encode_error(&Error::MissingShard { shard: 2 })), Error::MissingShard { shard: 2 }));
        assert!(matches!(decode_error(&encode_error(&Error::Degraded)), Error::Degraded));
    }

    #[test]
    fn bad_lengths() {
        let mut b = encode_eids(&[Ciphertext([1; CIPHERTEXT_LEN])]);
        b.push(0);
        assert!(decode_eids(&b).is_err());
        assert!(QueryBegin::decode(&[0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
    }
}
