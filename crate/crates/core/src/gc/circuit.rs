use crate::error::{Error, Result};

/// A circuit value: a constant or a wire. Constants fold away at build time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bit {
    Zero,
    One,
    Wire(u32),
}

impl Bit {
    pub fn constant(b: bool) -> Bit {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Xor { a: u32, b: u32, out: u32 },
    And { a: u32, b: u32, out: u32 },
    Not { a: u32, out: u32 },
}

/// Boolean circuit over two parties' inputs. Gates are topologically
/// ordered; wires `0..garbler_inputs+evaluator_inputs` are inputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    pub wire_count: u32,
    pub garbler_inputs: u32,
    pub evaluator_inputs: u32,
    pub gates: Vec<Gate>,
    pub outputs: Vec<Bit>,
}

impl Circuit {
    pub fn and_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::And { .. })).count()
    }

    pub fn xor_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Xor { .. } | Gate::Not { .. })).count()
    }

    pub fn garbler_wire(&self, i: usize) -> u32 {
        i as u32
    }

    pub fn evaluator_wire(&self, i: usize) -> u32 {
        self.garbler_inputs + i as u32
    }

    /// Plaintext evaluation, the oracle for garbled evaluation.
    pub fn simulate(&self, garbler: &[bool], evaluator: &[bool]) -> Result<Vec<bool>> {
        if garbler.len() != self.garbler_inputs as usize || evaluator.len() != self.evaluator_inputs as usize {
            return Err(Error::Circuit(format!(
                "expected {}+{} inputs, got {}+{}",
                self.garbler_inputs,
                self.evaluator_inputs,
                garbler.len(),
                evaluator.len()
            )));
        }
        let mut w = vec![false; self.wire_count as usize];
        w[..garbler.len()].copy_from_slice(garbler);
        w[garbler.len()..garbler.len() + evaluator.len()].copy_from_slice(evaluator);
        for g in &self.gates {
            match *g {
                Gate::Xor { a, b, out } => w[out as usize] = w[a as usize] ^ w[b as usize],
                Gate::And { a, b, out } => w[out as usize] = w[a as usize] & w[b as usize],
                Gate::Not { a, out } => w[out as usize] = !w[a as usize],
            }
        }
        Ok(self
            .outputs
            .iter()
            .map(|o| match o {
                Bit::Zero => false,
                Bit::One => true,
                Bit::Wire(i) => w[*i as usize],
            })
            .collect())
    }
}

/// Incremental circuit construction. All garbler inputs must be declared
/// before evaluator inputs, and inputs before gates.
#[derive(Default)]
pub struct Builder {
    next: u32,
    garbler_inputs: u32,
    evaluator_inputs: u32,
    gates: Vec<Gate>,
}

impl Builder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn garbler_input(&mut self, n: usize) -> Vec<Bit> {
        assert!(self.evaluator_inputs == 0 && self.gates.is_empty(), "garbler inputs come first");
        self.garbler_inputs += n as u32;
        self.fresh(n)
    }

    pub fn evaluator_input(&mut self, n: usize) -> Vec<Bit> {
        assert!(self.gates.is_empty(), "inputs precede gates");
        self.evaluator_inputs += n as u32;
        self.fresh(n)
    }

    fn fresh(&mut self, n: usize) -> Vec<Bit> {
        let v = (self.next..self.next + n as u32).map(Bit::Wire).collect();
        self.next += n as u32;
        v
    }

    fn wire(&mut self) -> u32 {
        self.next += 1;
        self.next - 1
    }

    pub fn xor(&mut self, a: Bit, b: Bit) -> Bit {
        match (a, b) {
            (Bit::Zero, x) | (x, Bit::Zero) => x,
            (Bit::One, x) | (x, Bit::One) => self.not(x),
            (Bit::Wire(x), Bit::Wire(y)) if x == y => Bit::Zero,
            (Bit::Wire(x), Bit::Wire(y)) => {
                let out = self.wire();
                self.gates.push(Gate::Xor { a: x, b: y, out });
                Bit::Wire(out)
            }
        }
    }

    pub fn and(&mut self, a: Bit, b: Bit) -> Bit {
        match (a, b) {
            (Bit::Zero, _) | (_, Bit::Zero) => Bit::Zero,
            (Bit::One, x) | (x, Bit::One) => x,
            (Bit::Wire(x), Bit::Wire(y)) if x == y => a,
            (Bit::Wire(x), Bit::Wire(y)) => {
                let out = self.wire();
                self.gates.push(Gate::And { a: x, b: y, out });
                Bit::Wire(out)
            }
        }
    }

    pub fn not(&mut self, a: Bit) -> Bit {
        match a {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
            Bit::Wire(x) => {
                let out = self.wire();
                self.gates.push(Gate::Not { a: x, out });
                Bit::Wire(out)
            }
        }
    }

    pub fn xor_vec(&mut self, a: &[Bit], b: &[Bit]) -> Vec<Bit> {
        a.iter().zip(b).map(|(x, y)| self.xor(*x, *y)).collect()
    }

    /// Ripple-carry sum of two little-endian words, carry dropped.
    pub fn add(&mut self, a: &[Bit], b: &[Bit]) -> Vec<Bit> {
        assert_eq!(a.len(), b.len());
        let mut carry = Bit::Zero;
        let mut out = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let axc = self.xor(a[i], carry);
            let bxc = self.xor(b[i], carry);
            out.push(self.xor(axc, b[i]));
            if i + 1 < a.len() {
                // carry' = carry ^ ((a^carry) & (b^carry))
                let t = self.and(axc, bxc);
                carry = self.xor(carry, t);
            }
        }
        out
    }

    /// `a >= b` for little-endian unsigned words: the carry out of
    /// `a + !b + 1`.
    pub fn geq(&mut self, a: &[Bit], b: &[Bit]) -> Bit {
        assert_eq!(a.len(), b.len());
        let mut carry = Bit::One;
        for i in 0..a.len() {
            let nb = self.not(b[i]);
            let axc = self.xor(a[i], carry);
            let bxc = self.xor(nb, carry);
            let t = self.and(axc, bxc);
            carry = self.xor(carry, t);
        }
        carry
    }

    /// Swaps `a` and `b` when `c` is set.
    pub fn cond_swap(&mut self, c: Bit, a: &mut [Bit], b: &mut [Bit]) {
        for i in 0..a.len() {
            let d = self.xor(a[i], b[i]);
            let t = self.and(c, d);
            a[i] = self.xor(a[i], t);
            b[i] = self.xor(b[i], t);
        }
    }

    pub fn finish(self, outputs: Vec<Bit>) -> Circuit {
        Circuit {
            wire_count: self.next,
            garbler_inputs: self.garbler_inputs,
            evaluator_inputs: self.evaluator_inputs,
            gates: self.gates,
            outputs,
        }
    }
}

/// Little-endian bits of `v`.
pub fn to_bits(v: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| v >> i & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter().enumerate().fold(0, |acc, (i, b)| acc | (*b as u64) << i)
}

pub fn const_bits(v: u64, width: usize) -> Vec<Bit> {
    to_bits(v, width).into_iter().map(Bit::constant).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binop(f: impl Fn(&mut Builder, &[Bit], &[Bit]) -> Vec<Bit>, width: usize) -> Circuit {
        let mut b = Builder::new();
        let x = b.garbler_input(width);
        let y = b.evaluator_input(width);
        let out = f(&mut b, &x, &y);
        b.finish(out)
    }

    proptest! {
        #[test]
        fn adder_matches_wrapping_add(x in 0u64..1 << 31, y in 0u64..1 << 31) {
            let c = binop(|b, x, y| b.add(x, y), 31);
            let out = c.simulate(&to_bits(x, 31), &to_bits(y, 31)).unwrap();
            prop_assert_eq!(from_bits(&out), (x + y) % (1 << 31));
        }

        #[test]
        fn comparator_matches(x in 0u64..256, y in 0u64..256) {
            let c = binop(|b, x, y| vec![b.geq(x, y)], 8);
            let out = c.simulate(&to_bits(x, 8), &to_bits(y, 8)).unwrap();
            prop_assert_eq!(out[0], x >= y);
        }
    }

    #[test]
    fn adder_and_count() {
        let c = binop(|b, x, y| b.add(x, y), 31);
        assert_eq!(c.and_count(), 30);
    }

    #[test]
    fn constants_fold() {
        let mut b = Builder::new();
        let x = b.garbler_input(1)[0];
        assert_eq!(b.and(x, Bit::Zero), Bit::Zero);
        assert_eq!(b.and(x, Bit::One), x);
        assert_eq!(b.xor(x, x), Bit::Zero);
        assert_eq!(b.xor(x, Bit::Zero), x);
        assert_eq!(b.finish(vec![]).gates.len(), 0);
    }
}
