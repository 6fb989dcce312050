use super::circuit::{const_bits, from_bits, to_bits, Bit, Builder, Circuit};
use crate::error::{Error, Result};
use crate::mpc::RING_MASK;

pub const SCORE_BITS: usize = 31;

/// Default cap on the entries one sort circuit may take.
pub const DEFAULT_MAX_SORT: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Comparator {
    pub i: usize,
    pub j: usize,
    /// Leaves the larger element at `i` when set.
    pub descending: bool,
}

/// Bitonic network sorting `n = 2^m` elements into descending order. It
/// depends on `n` alone.
pub fn bitonic_schedule(n: usize) -> Vec<Comparator> {
    assert!(n.is_power_of_two(), "bitonic networks need a power of two");
    let mut out = Vec::with_capacity(comparator_count(n));
    let mut size = 2;
    while size <= n {
        let mut stride = size / 2;
        while stride > 0 {
            for i in 0..n {
                let j = i ^ stride;
                if j > i {
                    out.push(Comparator { i, j, descending: i & size == 0 });
                }
            }
            stride /= 2;
        }
        size *= 2;
    }
    out
}

/// `n·m(m+1)/4` for `n = 2^m`.
pub fn comparator_count(n: usize) -> usize {
    let m = n.trailing_zeros() as usize;
    n * m * (m + 1) / 4
}

/// Bits needed to index `n` distinct positions.
pub fn index_bits(n: usize) -> usize {
    if n <= 2 {
        1
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

struct Element {
    key: Vec<Bit>,
    payload: Vec<Bit>,
}

/// Sorts descending by key; padding to a power of two uses all-zero
/// elements, whose clear top key bit ranks them below every real entry.
fn sort_network(b: &mut Builder, mut elems: Vec<Element>) -> Vec<Element> {
    let key_len = elems[0].key.len();
    let pay_len = elems[0].payload.len();
    let n = elems.len().next_power_of_two();
    while elems.len() < n {
        elems.push(Element { key: vec![Bit::Zero; key_len], payload: vec![Bit::Zero; pay_len] });
    }
    for c in bitonic_schedule(n) {
        let (lo, hi) = elems.split_at_mut(c.j);
        let (x, y) = (&mut lo[c.i], &mut hi[0]);
        let swap = if c.descending {
            let ge = b.geq(&x.key, &y.key);
            b.not(ge)
        } else {
            let ge = b.geq(&y.key, &x.key);
            b.not(ge)
        };
        b.cond_swap(swap, &mut x.key, &mut y.key);
        b.cond_swap(swap, &mut x.payload, &mut y.payload);
    }
    elems
}

/// Local sort for one shard pair.
///
/// Garbler inputs: per entry its score share and position index, then one
/// 31-bit mask per output position. Evaluator inputs: its score shares.
/// Outputs per position: masked score, position index.
#[derive(Clone, Debug)]
pub struct LocalSortCircuit {
    pub k: usize,
    pub outputs: usize,
    pub payload_bits: usize,
    pub circuit: Circuit,
}

pub fn local_sort_circuit(k: usize, outputs: usize) -> Result<LocalSortCircuit> {
    if k == 0 {
        return Err(Error::Circuit("sort of an empty vector".into()));
    }
    let outputs = outputs.min(k);
    let pw = index_bits(k);
    let mut b = Builder::new();
    let mut g_shares = Vec::with_capacity(k);
    let mut g_payloads = Vec::with_capacity(k);
    for _ in 0..k {
        g_shares.push(b.garbler_input(SCORE_BITS));
        g_payloads.push(b.garbler_input(pw));
    }
    let masks: Vec<Vec<Bit>> = (0..outputs).map(|_| b.garbler_input(SCORE_BITS)).collect();
    let e_shares: Vec<Vec<Bit>> = (0..k).map(|_| b.evaluator_input(SCORE_BITS)).collect();
    let elems = (0..k)
        .map(|i| {
            let mut key = b.add(&g_shares[i], &e_shares[i]);
            key.push(Bit::One);
            Element { key, payload: g_payloads[i].clone() }
        })
        .collect();
    let sorted = sort_network(&mut b, elems);
    let mut out = Vec::with_capacity(outputs * (SCORE_BITS + pw));
    for (p, e) in sorted.iter().take(outputs).enumerate() {
        out.extend(b.xor_vec(&e.key[..SCORE_BITS], &masks[p]));
        out.extend(&e.payload);
    }
    Ok(LocalSortCircuit { k, outputs, payload_bits: pw, circuit: b.finish(out) })
}

impl LocalSortCircuit {
    fn entry_bits(&self) -> usize {
        SCORE_BITS + self.payload_bits
    }

    /// Offset of the mask inputs among the garbler's inputs.
    pub fn mask_offset(&self) -> usize {
        self.k * self.entry_bits()
    }

    pub fn garbler_bits(&self, shares: &[u32]) -> Result<Vec<bool>> {
        self.check_len(shares.len())?;
        let mut v = Vec::with_capacity(self.mask_offset());
        for (i, s) in shares.iter().enumerate() {
            v.extend(to_bits((*s & RING_MASK) as u64, SCORE_BITS));
            v.extend(to_bits(i as u64, self.payload_bits));
        }
        Ok(v)
    }

    pub fn mask_bits(&self, masks: &[u32]) -> Result<Vec<bool>> {
        if masks.len() != self.outputs {
            return Err(Error::Circuit(format!("{} masks for {} outputs", masks.len(), self.outputs)));
        }
        Ok(masks.iter().flat_map(|m| to_bits((*m & RING_MASK) as u64, SCORE_BITS)).collect())
    }

    pub fn evaluator_bits(&self, shares: &[u32]) -> Result<Vec<bool>> {
        self.check_len(shares.len())?;
        Ok(shares.iter().flat_map(|s| to_bits((*s & RING_MASK) as u64, SCORE_BITS)).collect())
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.k {
            return Err(Error::Circuit(format!("{n} shares for a {}-entry sort", self.k)));
        }
        Ok(())
    }

    /// `(masked score, position)` per output, best first.
    pub fn decode(&self, bits: &[bool]) -> Vec<(u32, usize)> {
        bits.chunks(self.entry_bits())
            .map(|c| (from_bits(&c[..SCORE_BITS]) as u32, from_bits(&c[SCORE_BITS..]) as usize))
            .collect()
    }
}

/// Global merge at the coordinators.
///
/// Garbler inputs: per shard, per entry its masked score and position.
/// Evaluator inputs: the matching masks. The shard number is a constant of
/// the circuit. Outputs per position: position index and shard.
#[derive(Clone, Debug)]
pub struct GlobalSortCircuit {
    pub counts: Vec<usize>,
    pub outputs: usize,
    pub payload_bits: usize,
    pub shard_bits: usize,
    pub circuit: Circuit,
}

/// `position_bits` must cover the shards' full match counts, not the
/// (possibly truncated) forwarded counts.
pub fn global_sort_circuit(counts: &[usize], outputs: usize, position_bits: usize) -> Result<GlobalSortCircuit> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Circuit("global sort with no entries".into()));
    }
    if !(1..=32).contains(&position_bits) {
        return Err(Error::Circuit(format!("{position_bits}-bit positions")));
    }
    let outputs = outputs.min(total);
    let pw = position_bits;
    let sw = index_bits(counts.len());
    let mut b = Builder::new();
    let mut g = Vec::with_capacity(total);
    for (j, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let score = b.garbler_input(SCORE_BITS);
            let pos = b.garbler_input(pw);
            g.push((j, score, pos));
        }
    }
    let masks: Vec<Vec<Bit>> = (0..total).map(|_| b.evaluator_input(SCORE_BITS)).collect();
    let elems = g
        .into_iter()
        .zip(masks)
        .map(|((j, score, pos), mask)| {
            let mut key = b.xor_vec(&score, &mask);
            key.push(Bit::One);
            let mut payload = pos;
            payload.extend(const_bits(j as u64, sw));
            Element { key, payload }
        })
        .collect();
    let sorted = sort_network(&mut b, elems);
    let out = sorted.iter().take(outputs).flat_map(|e| e.payload.clone()).collect();
    Ok(GlobalSortCircuit { counts: counts.to_vec(), outputs, payload_bits: pw, shard_bits: sw, circuit: b.finish(out) })
}

impl GlobalSortCircuit {
    /// Garbler bits from each shard's forwarded `(masked score, position)`
    /// list.
    pub fn garbler_bits(&self, shards: &[Vec<(u32, usize)>]) -> Result<Vec<bool>> {
        if shards.iter().map(|s| s.len()).collect::<Vec<_>>() != self.counts {
            return Err(Error::Circuit("forwarded vectors do not match the sort header".into()));
        }
        if shards.iter().flatten().any(|(_, p)| (*p as u64) >> self.payload_bits != 0) {
            return Err(Error::Circuit(format!("position does not fit {} bits", self.payload_bits)));
        }
        let mut v = Vec::new();
        for (score, pos) in shards.iter().flatten() {
            v.extend(to_bits((*score & RING_MASK) as u64, SCORE_BITS));
            v.extend(to_bits(*pos as u64, self.payload_bits));
        }
        Ok(v)
    }

    pub fn evaluator_bits(&self, masks: &[Vec<u32>]) -> Result<Vec<bool>> {
        if masks.iter().map(|s| s.len()).collect::<Vec<_>>() != self.counts {
            return Err(Error::Circuit("forwarded masks do not match the sort header".into()));
        }
        Ok(masks.iter().flatten().flat_map(|m| to_bits((*m & RING_MASK) as u64, SCORE_BITS)).collect())
    }

    /// `(position, shard)` per output, best first.
    pub fn decode(&self, bits: &[bool]) -> Vec<(usize, usize)> {
        bits.chunks(self.payload_bits + self.shard_bits)
            .map(|c| (from_bits(&c[..self.payload_bits]) as usize, from_bits(&c[self.payload_bits..]) as usize))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::ring_sub;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn comparator_counts() {
        for m in 0..=10 {
            let n = 1usize << m;
            assert_eq!(bitonic_schedule(n).len(), n * m * (m + 1) / 4);
        }
        assert_eq!(comparator_count(128), 1792);
        assert_eq!(comparator_count(2), 1);
    }

    #[test]
    fn schedule_sorts_plain_values() {
        // Zero-one principle over all 2^8 inputs of width 8.
        let sched = bitonic_schedule(8);
        for mask in 0u32..256 {
            let mut v: Vec<u32> = (0..8).map(|i| mask >> i & 1).collect();
            for c in &sched {
                let (a, b) = (v[c.i], v[c.j]);
                if c.descending == (a < b) {
                    v.swap(c.i, c.j);
                }
            }
            assert!(v.windows(2).all(|w| w[0] >= w[1]), "{v:?}");
        }
    }

    #[test]
    fn index_widths() {
        assert_eq!(index_bits(1), 1);
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(3), 2);
        assert_eq!(index_bits(128), 7);
        assert_eq!(index_bits(129), 8);
    }

    fn split(v: &[u32], rng: &mut ChaCha20Rng) -> (Vec<u32>, Vec<u32>) {
        let s0: Vec<u32> = v.iter().map(|_| rng.gen::<u32>() & RING_MASK).collect();
        let s1 = v.iter().zip(&s0).map(|(x, a)| ring_sub(*x, *a)).collect();
        (s0, s1)
    }

    fn simulate_local(scores: &[u32], outputs: usize, rng: &mut ChaCha20Rng) -> (Vec<(u32, usize)>, Vec<u32>) {
        let lc = local_sort_circuit(scores.len(), outputs).unwrap();
        let (s0, s1) = split(scores, rng);
        let masks: Vec<u32> = (0..lc.outputs).map(|_| rng.gen::<u32>() & RING_MASK).collect();
        let mut g = lc.garbler_bits(&s0).unwrap();
        g.extend(lc.mask_bits(&masks).unwrap());
        let out = lc.circuit.simulate(&g, &lc.evaluator_bits(&s1).unwrap()).unwrap();
        (lc.decode(&out), masks)
    }

    #[test]
    fn local_sort_example() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (out, masks) = simulate_local(&[5, 9, 2], 3, &mut rng);
        let order: Vec<usize> = out.iter().map(|o| o.1).collect();
        assert_eq!(order, vec![1, 0, 2]);
        let unmasked: Vec<u32> = out.iter().zip(&masks).map(|(o, m)| o.0 ^ m).collect();
        assert_eq!(unmasked, vec![9, 5, 2]);

        let (out, masks) = simulate_local(&[7, 7, 7], 3, &mut rng);
        let mut pos: Vec<usize> = out.iter().map(|o| o.1).collect();
        pos.sort();
        assert_eq!(pos, vec![0, 1, 2]);
        assert!(out.iter().zip(&masks).all(|(o, m)| o.0 ^ m == 7));

        let (out, masks) = simulate_local(&[11], 1, &mut rng);
        assert_eq!(out[0].1, 0);
        assert_eq!(out[0].0 ^ masks[0], 11);
    }

    #[test]
    fn local_sort_random_vs_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for k in [1usize, 2, 3, 5, 8, 13, 16] {
            for _ in 0..10 {
                let scores: Vec<u32> = (0..k).map(|_| rng.gen_range(0..1000)).collect();
                let top = rng.gen_range(1..=k);
                let (out, masks) = simulate_local(&scores, top, &mut rng);
                let mut want = scores.clone();
                want.sort_by(|a, b| b.cmp(a));
                let got: Vec<u32> = out.iter().zip(&masks).map(|(o, m)| o.0 ^ m).collect();
                assert_eq!(got, want[..top]);
                // Position payloads point back at those scores.
                for (o, m) in out.iter().zip(&masks) {
                    assert_eq!(scores[o.1], o.0 ^ m);
                }
            }
        }
    }

    #[test]
    fn global_merge_example() {
        // Two shards with sorted vectors [9,5] and [8,1].
        let gc = global_sort_circuit(&[2, 2], 4, 1).unwrap();
        let masks = vec![vec![3, 77], vec![1000, 5]];
        let shards = vec![vec![(9 ^ 3, 0), (5 ^ 77, 1)], vec![(8 ^ 1000, 0), (1 ^ 5, 1)]];
        let out = gc
            .circuit
            .simulate(&gc.garbler_bits(&shards).unwrap(), &gc.evaluator_bits(&masks).unwrap())
            .unwrap();
        assert_eq!(gc.decode(&out), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn truncated_local_then_global() {
        // Positions past the forwarded count must survive the merge.
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let scores: Vec<u32> = (0..40).map(|_| rng.gen_range(0..1000)).collect();
        let (out, masks) = simulate_local(&scores, 3, &mut rng);
        let gc = global_sort_circuit(&[3], 3, index_bits(40)).unwrap();
        let bits = gc.circuit.simulate(&gc.garbler_bits(&[out.clone()]).unwrap(), &gc.evaluator_bits(&[masks]).unwrap());
        let got: Vec<usize> = gc.decode(&bits.unwrap()).iter().map(|r| r.0).collect();
        assert_eq!(got, out.iter().map(|o| o.1).collect::<Vec<_>>());
        assert!(global_sort_circuit(&[3], 3, 1).unwrap().garbler_bits(&[out]).is_err());
    }

    #[test]
    fn zero_scores_outrank_padding() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (out, masks) = simulate_local(&[0, 0, 0], 3, &mut rng);
        let mut pos: Vec<usize> = out.iter().map(|o| o.1).collect();
        pos.sort();
        assert_eq!(pos, vec![0, 1, 2]);
        assert!(out.iter().zip(&masks).all(|(o, m)| o.0 ^ m == 0));
    }
}
