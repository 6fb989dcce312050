use std::collections::BTreeMap;

use crate::crypto::{Ciphertext, Exponent, STag, CIPHERTEXT_LEN, STAG_LEN};
use crate::error::{Error, Result};

pub const TUPLE_LEN: usize = 4 + CIPHERTEXT_LEN + 32;
const MAGIC: &[u8; 4] = b"EGTS";
const VERSION: u16 = 1;

/// One posting-list entry as stored on an index server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedTuple {
    /// This cluster's additive share of the sort-key.
    pub share: u32,
    pub e_id: Ciphertext,
    pub y: Exponent,
}

impl EncryptedTuple {
    pub fn to_bytes(&self) -> [u8; TUPLE_LEN] {
        let mut out = [0u8; TUPLE_LEN];
        out[..4].copy_from_slice(&self.share.to_be_bytes());
        out[4..4 + CIPHERTEXT_LEN].copy_from_slice(&self.e_id.0);
        out[4 + CIPHERTEXT_LEN..].copy_from_slice(&self.y.to_bytes());
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() != TUPLE_LEN {
            return Err(Error::protocol(format!("tuple of {} bytes", b.len())));
        }
        let y = Exponent::from_bytes(b[4 + CIPHERTEXT_LEN..].try_into().unwrap())
            .ok_or_else(|| Error::protocol("non-canonical blinding exponent"))?;
        Ok(EncryptedTuple {
            share: u32::from_be_bytes(b[..4].try_into().unwrap()),
            e_id: Ciphertext(b[4..4 + CIPHERTEXT_LEN].try_into().unwrap()),
            y,
        })
    }
}

/// Byte-keyed store; the only storage interface the servers use.
pub trait KvStore: Send + Sync {
    fn get(&self, key: &[u8]) -> Option<&[u8]>;
    fn put(&mut self, key: Vec<u8>, value: Vec<u8>);
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// In-process ordered map. Ordered so serialisation is deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemKv(BTreeMap<Vec<u8>, Vec<u8>>);

impl KvStore for MemKv {
    fn get(&self, key: &[u8]) -> Option<&[u8]> {
        self.0.get(key).map(Vec::as_slice)
    }

    fn put(&mut self, key: Vec<u8>, value: Vec<u8>) {
        self.0.insert(key, value);
    }

    fn len(&self) -> usize {
        self.0.len()
    }
}

impl MemKv {
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u8>, &Vec<u8>)> {
        self.0.iter()
    }
}

/// Counter key: the bare stag. Block keys: stag || block index (1-based, u32 BE).
fn block_key(stag: &STag, block: u32) -> Vec<u8> {
    let mut k = stag.0.to_vec();
    k.extend_from_slice(&block.to_be_bytes());
    k
}

/// One server's TSet: posting lists cut into blocks of at most `block_size`
/// tuples, plus a clear-text block counter per stag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TSetShard {
    pub block_size: usize,
    kv: MemKv,
    tuples: u64,
}

impl TSetShard {
    pub fn new(block_size: usize) -> Self {
        assert!(block_size > 0 && block_size <= u16::MAX as usize);
        TSetShard { block_size, kv: MemKv::default(), tuples: 0 }
    }

    /// Stores the list for `stag`, tuples in counter order.
    pub fn insert_list(&mut self, stag: &STag, tuples: &[EncryptedTuple]) {
        let blocks = tuples.chunks(self.block_size);
        let count = blocks.len() as u32;
        for (i, block) in blocks.enumerate() {
            let mut v = Vec::with_capacity(2 + block.len() * TUPLE_LEN);
            v.extend_from_slice(&(block.len() as u16).to_be_bytes());
            for t in block {
                v.extend_from_slice(&t.to_bytes());
            }
            self.kv.put(block_key(stag, i as u32 + 1), v);
        }
        self.kv.put(stag.0.to_vec(), count.to_be_bytes().to_vec());
        self.tuples += tuples.len() as u64;
    }

    pub fn block_count(&self, stag: &STag) -> u32 {
        self.kv
            .get(&stag.0)
            .map_or(0, |v| u32::from_be_bytes(v.try_into().unwrap()))
    }

    pub fn block(&self, stag: &STag, block: u32) -> Option<&[u8]> {
        self.kv.get(&block_key(stag, block))
    }

    /// All tuples of `stag` in stored order; empty for an unknown stag.
    pub fn retrieve(&self, stag: &STag) -> Result<Vec<EncryptedTuple>> {
        let mut out = Vec::new();
        for b in 1..=self.block_count(stag) {
            let raw = self
                .block(stag, b)
                .ok_or_else(|| Error::protocol(format!("missing block {b}")))?;
            let n = u16::from_be_bytes([raw[0], raw[1]]) as usize;
            if raw.len() != 2 + n * TUPLE_LEN {
                return Err(Error::protocol("block length mismatch"));
            }
            for t in raw[2..].chunks_exact(TUPLE_LEN) {
                out.push(EncryptedTuple::from_bytes(t)?);
            }
        }
        Ok(out)
    }

    pub fn tuple_count(&self) -> u64 {
        self.tuples
    }

    pub fn stag_count(&self) -> usize {
        self.kv.iter().filter(|(k, _)| k.len() == STAG_LEN).count()
    }

    pub fn kv_len(&self) -> usize {
        self.kv.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_be_bytes());
        out.extend_from_slice(&(self.block_size as u32).to_be_bytes());
        out.extend_from_slice(&self.tuples.to_be_bytes());
        out.extend_from_slice(&(self.kv.len() as u64).to_be_bytes());
        for (k, v) in self.kv.iter() {
            out.extend_from_slice(&(k.len() as u16).to_be_bytes());
            out.extend_from_slice(k);
            out.extend_from_slice(&(v.len() as u32).to_be_bytes());
            out.extend_from_slice(v);
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::protocol(format!("malformed tset file: {m}"));
        if b.len() < 26 || &b[..4] != MAGIC {
            return Err(bad("magic"));
        }
        if u16::from_be_bytes([b[4], b[5]]) != VERSION {
            return Err(bad("version"));
        }
        let block_size = u32::from_be_bytes(b[6..10].try_into().unwrap()) as usize;
        let tuples = u64::from_be_bytes(b[10..18].try_into().unwrap());
        let entries = u64::from_be_bytes(b[18..26].try_into().unwrap());
        if block_size == 0 || block_size > u16::MAX as usize {
            return Err(bad("block size"));
        }
        let mut kv = MemKv::default();
        let mut pos = 26;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = b.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        for _ in 0..entries {
            let kl = u16::from_be_bytes(take(2)?.try_into().unwrap()) as usize;
            let k = take(kl)?.to_vec();
            let vl = u32::from_be_bytes(take(4)?.try_into().unwrap()) as usize;
            let v = take(vl)?.to_vec();
            kv.put(k, v);
        }
        if pos != b.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(TSetShard { block_size, kv, tuples })
    }

    /// Serialised form with every share zeroed; counterpart servers must
    /// agree on it byte for byte.
    pub fn share_free_bytes(&self) -> Vec<u8> {
        let mut copy = self.clone();
        for (k, v) in copy.kv.0.iter_mut() {
            if k.len() == STAG_LEN {
                continue;
            }
            for t in v[2..].chunks_exact_mut(TUPLE_LEN) {
                t[..4].fill(0);
            }
        }
        copy.to_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tuple(i: u32) -> EncryptedTuple {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(i as u64);
        EncryptedTuple {
            share: i,
            e_id: Ciphertext([i as u8; CIPHERTEXT_LEN]),
            y: Exponent::random(&mut rng),
        }
    }

    #[test]
    fn seven_tuples_in_blocks_of_three() {
        let mut ts = TSetShard::new(3);
        let stag = STag([9; STAG_LEN]);
        let list: Vec<_> = (0..7).map(tuple).collect();
        ts.insert_list(&stag, &list);
        assert_eq!(ts.block_count(&stag), 3);
        let sizes: Vec<u16> = (1..=3)
            .map(|b| {
                let raw = ts.block(&stag, b).unwrap();
                u16::from_be_bytes([raw[0], raw[1]])
            })
            .collect();
        assert_eq!(sizes, vec![3, 3, 1]);
        assert_eq!(ts.retrieve(&stag).unwrap(), list);
        assert!(ts.retrieve(&STag([1; STAG_LEN])).unwrap().is_empty());
        let back = TSetShard::from_bytes(&ts.to_bytes()).unwrap();
        assert_eq!(back, ts);
        assert!(TSetShard::from_bytes(&ts.to_bytes()[..40]).is_err());
    }

    #[test]
    fn tuple_encoding() {
        let t = tuple(5);
        assert_eq!(EncryptedTuple::from_bytes(&t.to_bytes()).unwrap(), t);
        assert_eq!(TUPLE_LEN, 72);
    }
}
