use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EGBF";

/// Bloom filter with double hashing over SHA-256 of the element.
#[derive(Clone, Debug, PartialEq)]
pub struct BloomFilter {
    bits: Vec<u64>,
    m: u64,
    k: u32,
    count: u64,
    target_fpr: f64,
}

impl BloomFilter {
    /// Sized for `expected` elements at false-positive rate `fpr`.
    pub fn with_rate(expected: usize, fpr: f64) -> Self {
        assert!(fpr > 0.0 && fpr < 1.0, "fpr must lie in (0, 1)");
        let n = expected.max(1) as f64;
        let ln2 = std::f64::consts::LN_2;
        let m = ((-n * fpr.ln()) / (ln2 * ln2)).ceil().max(64.0) as u64;
        let k = ((m as f64 / n) * ln2).round().max(1.0) as u32;
        BloomFilter {
            bits: vec![0; m.div_ceil(64) as usize],
            m,
            k,
            count: 0,
            target_fpr: fpr,
        }
    }

    fn probes(&self, item: &[u8]) -> impl Iterator<Item = u64> {
        let d = Sha256::digest(item);
        let h1 = u64::from_be_bytes(d[0..8].try_into().unwrap());
        let h2 = u64::from_be_bytes(d[8..16].try_into().unwrap()) | 1;
        let (m, k) = (self.m, self.k as u64);
        (0..k).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % m)
    }

    pub fn insert(&mut self, item: &[u8]) {
        let probes: Vec<u64> = self.probes(item).collect();
        for p in probes {
            self.bits[(p / 64) as usize] |= 1 << (p % 64);
        }
        self.count += 1;
    }

    pub fn contains(&self, item: &[u8]) -> bool {
        if self.count == 0 {
            return false;
        }
        self.probes(item)
            .all(|p| self.bits[(p / 64) as usize] >> (p % 64) & 1 == 1)
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn bit_len(&self) -> u64 {
        self.m
    }

    pub fn hash_count(&self) -> u32 {
        self.k
    }

    pub fn target_fpr(&self) -> f64 {
        self.target_fpr
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.bits.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.m.to_be_bytes());
        out.extend_from_slice(&self.k.to_be_bytes());
        out.extend_from_slice(&self.count.to_be_bytes());
        out.extend_from_slice(&self.target_fpr.to_be_bytes());
        for w in &self.bits {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let bad = || Error::protocol("malformed xset file");
        if b.len() < 32 || &b[..4] != MAGIC {
            return Err(bad());
        }
        let m = u64::from_be_bytes(b[4..12].try_into().unwrap());
        let k = u32::from_be_bytes(b[12..16].try_into().unwrap());
        let count = u64::from_be_bytes(b[16..24].try_into().unwrap());
        let target_fpr = f64::from_be_bytes(b[24..32].try_into().unwrap());
        let words = m.div_ceil(64) as usize;
        if m == 0 || k == 0 || b.len() != 32 + words * 8 {
            return Err(bad());
        }
        let bits = b[32..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(BloomFilter { bits, m, k, count, target_fpr })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizing_formula() {
        let f = BloomFilter::with_rate(1000, 1e-6);
        // m = ceil(1000 * ln(1e6) / ln(2)^2), k = round(m/n * ln 2)
        assert_eq!(f.bit_len(), 28756);
        assert_eq!(f.hash_count(), 20);
    }

    #[test]
    fn members_present_and_fpr_bounded() {
        let mut f = BloomFilter::with_rate(2000, 1e-3);
        for i in 0u64..2000 {
            f.insert(&i.to_be_bytes());
        }
        assert!((0u64..2000).all(|i| f.contains(&i.to_be_bytes())));
        let probes = 100_000u64;
        let fp = (10_000_000..10_000_000 + probes)
            .filter(|i: &u64| f.contains(&i.to_be_bytes()))
            .count();
        assert!((fp as f64) / (probes as f64) <= 2e-3, "fp = {fp}");
        assert_eq!(BloomFilter::from_bytes(&f.to_bytes()).unwrap(), f);
    }

    #[test]
    fn empty_filter_rejects_everything() {
        let f = BloomFilter::with_rate(0, 1e-3);
        assert!(!(0u64..1000).any(|i| f.contains(&i.to_be_bytes())));
    }
}
