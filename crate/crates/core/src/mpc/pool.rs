use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::beaver::{MultiplicationTriple, TripleShape};
use super::share::{RingMatrix, ShareMatrix};
use super::triple::{decode_shape, dealer_triple_gen, encode_shape, triple_gen_cot, RunMode};
use crate::error::{Error, Result};
use crate::transport::{expect, send_msg, Channel, MsgType};
use crate::wire::{Reader, Writer};

/// Shape class used for elementwise products; a length-n vector product
/// consumes n of these.
pub const SCALAR: TripleShape = TripleShape::Hadamard { rows: 1, cols: 1 };

/// Bytes of one scalar triple's share (three ring elements).
pub const SCALAR_TRIPLE_BYTES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Exhaustion {
    #[default]
    BlockingRefill,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    /// Target fill per matrix shape class.
    pub per_shape: usize,
    /// Target fill of the scalar class.
    pub scalar: usize,
    /// Background refill kicks in below this fraction of the target.
    pub refill_below: f64,
    pub on_empty: Exhaustion,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig { per_shape: 64, scalar: 4096, refill_below: 0.5, on_empty: Exhaustion::BlockingRefill }
    }
}

impl PoolConfig {
    pub fn target(&self, shape: TripleShape) -> usize {
        if shape == SCALAR {
            self.scalar
        } else {
            self.per_shape
        }
    }
}

/// Where fresh triples come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripleSource {
    Cot,
    Dealer { seed: u64 },
}

impl TripleSource {
    pub fn new(mode: RunMode, dealer_seed: Option<u64>) -> Result<Self> {
        match (mode, dealer_seed) {
            (_, None) => Ok(TripleSource::Cot),
            (RunMode::DealerTest, Some(seed)) => Ok(TripleSource::Dealer { seed }),
            (RunMode::Secure, Some(_)) => {
                Err(Error::Config("dealer triples are refused in secure run mode".into()))
            }
        }
    }

    fn generate<R: RngCore + CryptoRng>(
        &self,
        party: u8,
        shape: TripleShape,
        count: usize,
        first_id: u64,
        ch: &mut dyn Channel,
        session: u64,
        rng: &mut R,
    ) -> Result<Vec<MultiplicationTriple>> {
        let shapes = vec![shape; count];
        match *self {
            TripleSource::Cot => triple_gen_cot(party, &shapes, ch, session, rng),
            TripleSource::Dealer { seed } => {
                let (p0, p1) = dealer_triple_gen(RunMode::DealerTest, &shapes, seed, first_id)?;
                Ok(if party == 0 { p0 } else { p1 })
            }
        }
    }
}

/// Precomputed triples keyed by shape and id. Cluster 0 allocates ids and
/// announces them; cluster 1 removes exactly those ids, so reuse of an id
/// fails on the second attempt.
pub struct TriplePool {
    party: u8,
    config: PoolConfig,
    next_id: u64,
    queues: BTreeMap<TripleShape, BTreeMap<u64, MultiplicationTriple>>,
    consumed: u64,
}

impl TriplePool {
    pub fn new(party: u8, config: PoolConfig) -> Self {
        TriplePool { party, config, next_id: 0, queues: BTreeMap::new(), consumed: 0 }
    }

    pub fn party(&self) -> u8 {
        self.party
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    pub fn available(&self, shape: TripleShape) -> usize {
        self.queues.get(&shape).map_or(0, |q| q.len())
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn shapes(&self) -> Vec<TripleShape> {
        self.queues.keys().copied().collect()
    }

    /// Triples needed to bring `shape` back to target, or 0 if it is above
    /// the refill threshold.
    pub fn deficit(&self, shape: TripleShape) -> usize {
        let target = self.config.target(shape);
        let have = self.available(shape);
        if (have as f64) < target as f64 * self.config.refill_below {
            target - have
        } else {
            0
        }
    }

    fn allocate_ids(&mut self, count: usize) -> u64 {
        let first = self.next_id;
        self.next_id += count as u64;
        first
    }

    pub fn insert(&mut self, first_id: u64, triples: Vec<MultiplicationTriple>) {
        for (i, t) in triples.into_iter().enumerate() {
            self.queues.entry(t.shape).or_default().insert(first_id + i as u64, t);
        }
    }

    /// Leader side: removes the `n` oldest triples of `shape`.
    pub fn take(&mut self, shape: TripleShape, n: usize) -> Result<Vec<(u64, MultiplicationTriple)>> {
        let q = self.queues.entry(shape).or_default();
        if q.len() < n {
            return Err(Error::Triple(format!("pool holds {} triples of {shape:?}, {n} needed", q.len())));
        }
        let ids: Vec<u64> = q.keys().take(n).copied().collect();
        self.consumed += n as u64;
        Ok(ids.into_iter().map(|id| (id, q.remove(&id).expect("present"))).collect())
    }

    /// Follower side: removes the triples the leader announced.
    pub fn take_ids(&mut self, shape: TripleShape, ids: &[u64]) -> Result<Vec<MultiplicationTriple>> {
        let q = self.queues.entry(shape).or_default();
        if let Some(id) = ids.iter().find(|id| !q.contains_key(id)) {
            return Err(Error::Triple(format!("triple {id} was already consumed or never generated")));
        }
        self.consumed += ids.len() as u64;
        Ok(ids.iter().map(|id| q.remove(id).expect("checked")).collect())
    }
}

fn encode_ids(w: &mut Writer, ids: &[u64]) {
    let mut runs: Vec<(u64, u32)> = Vec::new();
    for &id in ids {
        match runs.last_mut() {
            Some((start, len)) if *start + *len as u64 == id => *len += 1,
            _ => runs.push((id, 1)),
        }
    }
    w.u32(runs.len() as u32);
    for (start, len) in runs {
        w.u64(start).u32(len);
    }
}

fn decode_ids(r: &mut Reader<'_>) -> Result<Vec<u64>> {
    let n = r.u32()? as usize;
    if n > r.remaining() / 12 {
        return Err(Error::protocol("id run list larger than payload"));
    }
    let mut ids = Vec::new();
    for _ in 0..n {
        let start = r.u64()?;
        let len = r.u32()? as u64;
        ids.extend(start..start + len);
    }
    Ok(ids)
}

/// Leader side of a refill: announces `count` fresh ids then generates.
pub fn refill_leader<R: RngCore + CryptoRng>(
    pool: &Mutex<TriplePool>,
    source: &TripleSource,
    shape: TripleShape,
    count: usize,
    ch: &mut dyn Channel,
    session: u64,
    rng: &mut R,
) -> Result<()> {
    let first = pool.lock().expect("pool lock").allocate_ids(count);
    let mut w = Writer::new();
    w.u64(first).u32(count as u32);
    encode_shape(&mut w, shape);
    send_msg(ch, MsgType::TripleGenInit, session, w.finish())?;
    let triples = source.generate(0, shape, count, first, ch, session, rng)?;
    // The follower stores first, so announced ids always exist on both sides.
    expect(ch, MsgType::TripleGenDone)?;
    pool.lock().expect("pool lock").insert(first, triples);
    Ok(())
}

/// Follower side of a refill, given the TRIPLE_GEN_INIT payload.
pub fn refill_follower<R: RngCore + CryptoRng>(
    pool: &Mutex<TriplePool>,
    source: &TripleSource,
    init: &[u8],
    ch: &mut dyn Channel,
    session: u64,
    rng: &mut R,
) -> Result<()> {
    let mut r = Reader::new(init);
    let first = r.u64()?;
    let count = r.u32()? as usize;
    let shape = decode_shape(&mut r)?;
    r.end()?;
    let triples = source.generate(1, shape, count, first, ch, session, rng)?;
    pool.lock().expect("pool lock").insert(first, triples);
    send_msg(ch, MsgType::TripleGenDone, session, Vec::new())?;
    Ok(())
}

/// Leader: obtains `n` triples of `shape`, refilling over `ch` when the
/// pool runs short, and sends MUL_INIT with their ids.
pub fn acquire_leader<R: RngCore + CryptoRng>(
    pool: &Mutex<TriplePool>,
    source: &TripleSource,
    shape: TripleShape,
    n: usize,
    ch: &mut dyn Channel,
    session: u64,
    rng: &mut R,
) -> Result<Vec<MultiplicationTriple>> {
    loop {
        let attempt = {
            let mut p = pool.lock().expect("pool lock");
            if p.available(shape) >= n {
                Some(p.take(shape, n)?)
            } else if p.config.on_empty == Exhaustion::Error {
                return Err(Error::Triple(format!("triple pool exhausted for {shape:?}")));
            } else {
                None
            }
        };
        match attempt {
            Some(taken) => {
                let ids: Vec<u64> = taken.iter().map(|(id, _)| *id).collect();
                let mut w = Writer::new();
                encode_shape(&mut w, shape);
                encode_ids(&mut w, &ids);
                send_msg(ch, MsgType::MulInit, session, w.finish())?;
                return Ok(taken.into_iter().map(|(_, t)| t).collect());
            }
            None => {
                let (have, target) = {
                    let p = pool.lock().expect("pool lock");
                    (p.available(shape), p.config.target(shape))
                };
                let count = (n - have.min(n)).max(target.saturating_sub(have)).max(1);
                log::debug!("blocking refill of {count} triples of {shape:?}");
                refill_leader(pool, source, shape, count, ch, session, rng)?;
            }
        }
    }
}

/// Follower: serves refills until MUL_INIT names the triples to use.
pub fn acquire_follower<R: RngCore + CryptoRng>(
    pool: &Mutex<TriplePool>,
    source: &TripleSource,
    ch: &mut dyn Channel,
    session: u64,
    rng: &mut R,
) -> Result<(TripleShape, Vec<MultiplicationTriple>)> {
    loop {
        let f = ch.recv()?;
        match f.msg_type {
            MsgType::TripleGenInit => refill_follower(pool, source, &f.payload, ch, session, rng)?,
            MsgType::MulInit => {
                let mut r = Reader::new(&f.payload);
                let shape = decode_shape(&mut r)?;
                let ids = decode_ids(&mut r)?;
                r.end()?;
                let triples = pool.lock().expect("pool lock").take_ids(shape, &ids)?;
                return Ok((shape, triples));
            }
            MsgType::Error => {
                return Err(Error::protocol(format!(
                    "counterpart aborted: {}",
                    String::from_utf8_lossy(&f.payload)
                )))
            }
            other => {
                return Err(Error::protocol(format!("expected MUL_INIT, got {other:?}")));
            }
        }
    }
}

/// Concatenates scalar triples into one elementwise triple over a column.
pub fn combine_scalars(triples: &[MultiplicationTriple]) -> Result<MultiplicationTriple> {
    let party = triples.first().map(|t| t.party()).ok_or_else(|| Error::Triple("no triples".into()))?;
    if triples.iter().any(|t| t.shape != SCALAR || t.party() != party) {
        return Err(Error::Triple("combining non-scalar triples".into()));
    }
    let col = |f: fn(&MultiplicationTriple) -> &ShareMatrix| -> Result<ShareMatrix> {
        let data = triples.iter().map(|t| f(t).value.data[0]).collect();
        Ok(ShareMatrix::new(party, RingMatrix::vector(data)?))
    };
    Ok(MultiplicationTriple {
        shape: TripleShape::Hadamard { rows: triples.len(), cols: 1 },
        x: col(|t| &t.x)?,
        y: col(|t| &t.y)?,
        z: col(|t| &t.z)?,
    })
}
