use std::ops::{BitAnd, BitXor, BitXorAssign};

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::{CryptoRng, RngCore};

/// 128-bit value used for wire labels, OT seeds and pads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block(pub u128);

impl Block {
    pub const ZERO: Block = Block(0);

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Block {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Block(u128::from_le_bytes(b))
    }

    pub fn lsb(&self) -> bool {
        self.0 & 1 == 1
    }

    pub fn to_bytes(&self) -> [u8; 16] {
        self.0.to_le_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Block {
        let mut b = [0u8; 16];
        b.copy_from_slice(&bytes[..16]);
        Block(u128::from_le_bytes(b))
    }

    /// Returns `self` when `bit` is set, zero otherwise.
    pub fn select(&self, bit: bool) -> Block {
        Block(self.0 & (0u128.wrapping_sub(bit as u128)))
    }
}

impl BitXor for Block {
    type Output = Block;
    fn bitxor(self, rhs: Block) -> Block {
        Block(self.0 ^ rhs.0)
    }
}

impl BitXorAssign for Block {
    fn bitxor_assign(&mut self, rhs: Block) {
        self.0 ^= rhs.0;
    }
}

impl BitAnd for Block {
    type Output = Block;
    fn bitand(self, rhs: Block) -> Block {
        Block(self.0 & rhs.0)
    }
}

const FIXED_KEY: [u8; 16] = *b"encgraph-fixkey!";

/// Tweakable hash built from fixed-key AES in Matyas-Meyer-Oseas mode:
/// `H(x, t) = AES_k(x ^ t) ^ x ^ t`.
#[derive(Clone)]
pub struct FixedKeyHash {
    cipher: Aes128,
}

impl Default for FixedKeyHash {
    fn default() -> Self {
        FixedKeyHash {
            cipher: Aes128::new(&FIXED_KEY.into()),
        }
    }
}

impl FixedKeyHash {
    pub fn hash(&self, x: Block, tweak: u128) -> Block {
        let input = x.0 ^ tweak;
        let mut buf = input.to_le_bytes().into();
        self.cipher.encrypt_block(&mut buf);
        Block(u128::from_le_bytes(buf.into()) ^ input)
    }
}

/// AES-CTR pseudorandom generator keyed by a seed block, with a domain
/// separator so one seed can feed independent streams.
pub struct Prg {
    cipher: Aes128,
    domain: u64,
    counter: u64,
}

impl Prg {
    pub fn new(seed: Block, domain: u64) -> Self {
        Prg {
            cipher: Aes128::new(&seed.to_bytes().into()),
            domain,
            counter: 0,
        }
    }

    pub fn next_block(&mut self) -> Block {
        let input = ((self.domain as u128) << 64) | self.counter as u128;
        self.counter += 1;
        let mut buf = input.to_le_bytes().into();
        self.cipher.encrypt_block(&mut buf);
        Block(u128::from_le_bytes(buf.into()))
    }

    /// Fills `out` with pseudorandom 128-bit words.
    pub fn fill(&mut self, out: &mut [u128]) {
        for w in out.iter_mut() {
            *w = self.next_block().0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_masks() {
        let b = Block(0xdead_beef);
        assert_eq!(b.select(true), b);
        assert_eq!(b.select(false), Block::ZERO);
    }

    #[test]
    fn hash_depends_on_tweak() {
        let h = FixedKeyHash::default();
        let x = Block(42);
        assert_eq!(h.hash(x, 1), h.hash(x, 1));
        assert_ne!(h.hash(x, 1), h.hash(x, 2));
    }

    #[test]
    fn prg_domains_are_independent() {
        let mut a = Prg::new(Block(7), 0);
        let mut b = Prg::new(Block(7), 1);
        assert_ne!(a.next_block(), b.next_block());
        let mut c = Prg::new(Block(7), 0);
        c.next_block();
        assert_eq!(a.next_block(), c.next_block());
    }
}
