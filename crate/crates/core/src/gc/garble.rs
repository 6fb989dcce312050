use rand::{CryptoRng, RngCore};

use super::circuit::{Bit, Circuit, Gate};
use crate::crypto::{Block, FixedKeyHash};
use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

const OUTPUT_TWEAK: u128 = 1 << 100;

/// Garbled tables plus the output decoding table. This is all the evaluator
/// receives about the circuit beyond its public description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GarbledCircuit {
    /// Two ciphertexts per AND gate (half-gates).
    pub tables: Vec<[Block; 2]>,
    /// Per output wire, hashes of its zero and one labels.
    pub decode: Vec<[Block; 2]>,
}

impl GarbledCircuit {
    pub fn byte_len(&self) -> usize {
        8 + 32 * (self.tables.len() + self.decode.len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::with_capacity(self.byte_len()));
        w.u32(self.tables.len() as u32).u32(self.decode.len() as u32);
        for [a, b] in self.tables.iter().chain(&self.decode) {
            w.u128(a.0).u128(b.0);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let t = r.u32()? as usize;
        let d = r.u32()? as usize;
        if t.saturating_add(d).saturating_mul(32) != r.remaining() {
            return Err(Error::protocol("garbled circuit blob has the wrong length"));
        }
        let mut pair = || -> Result<[Block; 2]> { Ok([Block(r.u128()?), Block(r.u128()?)]) };
        let tables = (0..t).map(|_| pair()).collect::<Result<Vec<_>>>()?;
        let decode = (0..d).map(|_| pair()).collect::<Result<Vec<_>>>()?;
        Ok(GarbledCircuit { tables, decode })
    }
}

/// Garbler's secrets: the free-XOR offset and every input wire's zero label.
#[derive(Clone)]
pub struct GarblerKeys {
    delta: Block,
    garbler_zero: Vec<Block>,
    evaluator_zero: Vec<Block>,
}

impl GarblerKeys {
    /// Active labels for the garbler's inputs `offset..offset+bits.len()`.
    pub fn garbler_labels(&self, offset: usize, bits: &[bool]) -> Result<Vec<Block>> {
        let zero = self
            .garbler_zero
            .get(offset..offset + bits.len())
            .ok_or_else(|| Error::Circuit("garbler input range out of bounds".into()))?;
        Ok(zero.iter().zip(bits).map(|(l, b)| *l ^ self.delta.select(*b)).collect())
    }

    /// Label pairs for the evaluator's inputs, transferred by OT.
    pub fn evaluator_pairs(&self) -> Vec<(Block, Block)> {
        self.evaluator_zero.iter().map(|l| (*l, *l ^ self.delta)).collect()
    }
}

pub fn garble<R: RngCore + CryptoRng>(c: &Circuit, rng: &mut R) -> (GarbledCircuit, GarblerKeys) {
    let hash = FixedKeyHash::default();
    let delta = Block(Block::random(rng).0 | 1);
    let mut zero = vec![Block::ZERO; c.wire_count as usize];
    let inputs = (c.garbler_inputs + c.evaluator_inputs) as usize;
    for l in zero.iter_mut().take(inputs) {
        *l = Block::random(rng);
    }
    let mut tables = Vec::with_capacity(c.and_count());
    for g in &c.gates {
        match *g {
            Gate::Xor { a, b, out } => zero[out as usize] = zero[a as usize] ^ zero[b as usize],
            Gate::Not { a, out } => zero[out as usize] = zero[a as usize] ^ delta,
            Gate::And { a, b, out } => {
                let j = 2 * tables.len() as u128;
                let a0 = zero[a as usize];
                let b0 = zero[b as usize];
                let (a1, b1) = (a0 ^ delta, b0 ^ delta);
                let (pa, pb) = (a0.lsb(), b0.lsb());
                let (ha0, ha1) = (hash.hash(a0, j), hash.hash(a1, j));
                let (hb0, hb1) = (hash.hash(b0, j + 1), hash.hash(b1, j + 1));
                let tg = ha0 ^ ha1 ^ delta.select(pb);
                let wg = ha0 ^ tg.select(pa);
                let te = hb0 ^ hb1 ^ a0;
                let we = hb0 ^ (te ^ a0).select(pb);
                zero[out as usize] = wg ^ we;
                tables.push([tg, te]);
            }
        }
    }
    let decode = c
        .outputs
        .iter()
        .enumerate()
        .map(|(i, o)| match o {
            Bit::Wire(w) => {
                let t = OUTPUT_TWEAK + i as u128;
                let l0 = zero[*w as usize];
                [hash.hash(l0, t), hash.hash(l0 ^ delta, t)]
            }
            _ => [Block::ZERO; 2],
        })
        .collect();
    let g = c.garbler_inputs as usize;
    let keys = GarblerKeys {
        delta,
        garbler_zero: zero[..g].to_vec(),
        evaluator_zero: zero[g..inputs].to_vec(),
    };
    (GarbledCircuit { tables, decode }, keys)
}

/// Evaluates with one active label per input wire and decodes the outputs.
/// Only active labels are ever in scope here.
pub fn evaluate(c: &Circuit, gc: &GarbledCircuit, garbler: &[Block], evaluator: &[Block]) -> Result<Vec<bool>> {
    if garbler.len() != c.garbler_inputs as usize || evaluator.len() != c.evaluator_inputs as usize {
        return Err(Error::Circuit("wrong number of input labels".into()));
    }
    if gc.tables.len() != c.and_count() || gc.decode.len() != c.outputs.len() {
        return Err(Error::Circuit("garbled tables do not match the circuit".into()));
    }
    let hash = FixedKeyHash::default();
    let mut w = vec![Block::ZERO; c.wire_count as usize];
    w[..garbler.len()].copy_from_slice(garbler);
    w[garbler.len()..garbler.len() + evaluator.len()].copy_from_slice(evaluator);
    let mut t = 0usize;
    for g in &c.gates {
        match *g {
            Gate::Xor { a, b, out } => w[out as usize] = w[a as usize] ^ w[b as usize],
            Gate::Not { a, out } => w[out as usize] = w[a as usize],
            Gate::And { a, b, out } => {
                let j = 2 * t as u128;
                let [tg, te] = gc.tables[t];
                let (la, lb) = (w[a as usize], w[b as usize]);
                let wg = hash.hash(la, j) ^ tg.select(la.lsb());
                let we = hash.hash(lb, j + 1) ^ (te ^ la).select(lb.lsb());
                w[out as usize] = wg ^ we;
                t += 1;
            }
        }
    }
    c.outputs
        .iter()
        .enumerate()
        .map(|(i, o)| match o {
            Bit::Zero => Ok(false),
            Bit::One => Ok(true),
            Bit::Wire(x) => {
                let h = hash.hash(w[*x as usize], OUTPUT_TWEAK + i as u128);
                if h == gc.decode[i][0] {
                    Ok(false)
                } else if h == gc.decode[i][1] {
                    Ok(true)
                } else {
                    Err(Error::LabelDecode { wire: i })
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::circuit::Builder;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn run(c: &Circuit, g: &[bool], e: &[bool], rng: &mut ChaCha20Rng) -> Result<Vec<bool>> {
        let (gc, keys) = garble(c, rng);
        let gl = keys.garbler_labels(0, g)?;
        let el: Vec<Block> = keys.evaluator_pairs().iter().zip(e).map(|(p, b)| if *b { p.1 } else { p.0 }).collect();
        evaluate(c, &gc, &gl, &el)
    }

    #[test]
    fn and_truth_table() {
        let mut b = Builder::new();
        let x = b.garbler_input(1)[0];
        let y = b.evaluator_input(1)[0];
        let z = b.and(x, y);
        let c = b.finish(vec![z]);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for (x, y) in [(false, false), (false, true), (true, false), (true, true)] {
            assert_eq!(run(&c, &[x], &[y], &mut rng).unwrap(), vec![x && y]);
        }
    }

    #[test]
    fn xor_is_free() {
        let mut b = Builder::new();
        let x = b.garbler_input(8);
        let y = b.evaluator_input(8);
        let z = b.xor_vec(&x, &y);
        let c = b.finish(z);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (gc, _) = garble(&c, &mut rng);
        assert!(gc.tables.is_empty());
        assert_eq!(c.and_count(), 0);
    }

    #[test]
    fn random_circuits_match_simulation() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..500 {
            let mut b = Builder::new();
            let gi = rng.gen_range(1..6);
            let ei = rng.gen_range(1..6);
            let mut wires = b.garbler_input(gi);
            wires.extend(b.evaluator_input(ei));
            for _ in 0..rng.gen_range(1..40) {
                let x = wires[rng.gen_range(0..wires.len())];
                let y = wires[rng.gen_range(0..wires.len())];
                let z = match rng.gen_range(0..3) {
                    0 => b.and(x, y),
                    1 => b.xor(x, y),
                    _ => b.not(x),
                };
                wires.push(z);
            }
            let outs: Vec<Bit> = (0..4).map(|_| wires[rng.gen_range(0..wires.len())]).collect();
            let c = b.finish(outs);
            let g: Vec<bool> = (0..gi).map(|_| rng.gen()).collect();
            let e: Vec<bool> = (0..ei).map(|_| rng.gen()).collect();
            assert_eq!(run(&c, &g, &e, &mut rng).unwrap(), c.simulate(&g, &e).unwrap());
        }
    }

    #[test]
    fn corrupted_table_fails_decoding() {
        let mut b = Builder::new();
        let x = b.garbler_input(1)[0];
        let y = b.evaluator_input(1)[0];
        let z = b.and(x, y);
        let c = b.finish(vec![z]);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (mut gc, keys) = garble(&c, &mut rng);
        gc.tables[0][0].0 ^= 1 << 77;
        gc.tables[0][1].0 ^= 1 << 5;
        let mut failures = 0;
        for (x, y) in [(false, false), (false, true), (true, false), (true, true)] {
            let gl = keys.garbler_labels(0, &[x]).unwrap();
            let p = keys.evaluator_pairs()[0];
            let el = vec![if y { p.1 } else { p.0 }];
            match evaluate(&c, &gc, &gl, &el) {
                Ok(v) => assert_eq!(v, vec![x && y]),
                Err(Error::LabelDecode { wire: 0 }) => failures += 1,
                Err(e) => panic!("{e}"),
            }
        }
        // Point-and-permute makes some input combination read each row.
        assert!(failures > 0);
        let bytes = gc.to_bytes();
        assert_eq!(GarbledCircuit::from_bytes(&bytes).unwrap(), gc);
        assert!(GarbledCircuit::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
