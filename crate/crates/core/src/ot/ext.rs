use rand::{CryptoRng, RngCore};

use super::base::{base_ot_receive, base_ot_send, BASE_OT_COUNT};
use crate::crypto::{Block, FixedKeyHash, Prg};
use crate::error::{Error, Result};
use crate::mpc::{ring_add, ring_sub, RING_MASK};
use crate::transport::{expect, send_msg, Channel, MsgType};
use crate::wire::{Reader, Writer};

/// Transposes 128 columns of `m` bits into `m` 128-bit rows.
fn transpose(cols: &[Vec<u128>], m: usize) -> Vec<u128> {
    let mut rows = vec![0u128; m];
    for (j, col) in cols.iter().enumerate() {
        for (w, &word) in col.iter().enumerate() {
            let mut x = word;
            while x != 0 {
                let tz = x.trailing_zeros() as usize;
                let i = w * 128 + tz;
                if i < m {
                    rows[i] |= 1u128 << j;
                }
                x &= x - 1;
            }
        }
    }
    rows
}

fn pack(bits: &[bool]) -> Vec<u128> {
    let mut out = vec![0u128; bits.len().div_ceil(128)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 128] |= (b as u128) << (i % 128);
    }
    out
}

fn prg_column(seed: Block, call: u64, words: usize) -> Vec<u128> {
    let mut v = vec![0u128; words];
    Prg::new(seed, call).fill(&mut v);
    v
}

/// Extension sender. After a one-off base-OT setup it can run any number of
/// extension batches; each batch uses a fresh PRG domain.
pub struct OtExtSender {
    s: u128,
    seeds: Vec<Block>,
    calls: u64,
    ot_index: u128,
    hash: FixedKeyHash,
}

impl OtExtSender {
    pub fn setup<R: RngCore + CryptoRng>(ch: &mut dyn Channel, session: u64, rng: &mut R) -> Result<Self> {
        let s = Block::random(rng).0;
        let choices: Vec<bool> = (0..BASE_OT_COUNT).map(|j| s >> j & 1 == 1).collect();
        let seeds = base_ot_receive(ch, session, &choices, rng)?;
        Ok(OtExtSender { s, seeds, calls: 0, ot_index: 0, hash: FixedKeyHash::default() })
    }

    /// Rows `q_i = t_i ^ (r_i * s)`.
    fn extend(&mut self, ch: &mut dyn Channel, m: usize) -> Result<Vec<u128>> {
        let words = m.div_ceil(128);
        let f = expect(ch, MsgType::OtExtMatrix)?;
        if f.payload.len() != BASE_OT_COUNT * words * 16 {
            return Err(Error::protocol("OT extension: matrix size mismatch"));
        }
        let mut r = Reader::new(&f.payload);
        let mut cols = Vec::with_capacity(BASE_OT_COUNT);
        for j in 0..BASE_OT_COUNT {
            let mut col = prg_column(self.seeds[j], self.calls, words);
            let sj = self.s >> j & 1 == 1;
            for w in col.iter_mut() {
                let u = r.u128()?;
                if sj {
                    *w ^= u;
                }
            }
            cols.push(col);
        }
        self.calls += 1;
        Ok(transpose(&cols, m))
    }

    fn tweaks(&mut self, m: usize) -> u128 {
        let base = self.ot_index;
        self.ot_index += m as u128;
        base
    }

    /// Transfers `m_{c_i}` of each pair to the receiver.
    pub fn send_chosen(&mut self, ch: &mut dyn Channel, session: u64, msgs: &[(Block, Block)]) -> Result<()> {
        let q = self.extend(ch, msgs.len())?;
        let base = self.tweaks(msgs.len());
        let mut w = Writer(Vec::with_capacity(msgs.len() * 32));
        for (i, (m0, m1)) in msgs.iter().enumerate() {
            let t = base + i as u128;
            w.u128((*m0 ^ self.hash.hash(Block(q[i]), t)).0);
            w.u128((*m1 ^ self.hash.hash(Block(q[i] ^ self.s), t)).0);
        }
        send_msg(ch, MsgType::OtPayload, session, w.finish())?;
        Ok(())
    }

    /// Correlated OT over Z_{2^31}: returns the sender's random `x0_i`; the
    /// receiver obtains `x0_i` (choice 0) or `x0_i + delta_i` (choice 1).
    pub fn send_correlated(&mut self, ch: &mut dyn Channel, session: u64, deltas: &[u32]) -> Result<Vec<u32>> {
        let q = self.extend(ch, deltas.len())?;
        let base = self.tweaks(deltas.len());
        let mut x0 = Vec::with_capacity(deltas.len());
        let mut w = Writer(Vec::with_capacity(deltas.len() * 4));
        for (i, &d) in deltas.iter().enumerate() {
            let t = base + i as u128;
            let r0 = self.hash.hash(Block(q[i]), t).0 as u32 & RING_MASK;
            let r1 = self.hash.hash(Block(q[i] ^ self.s), t).0 as u32 & RING_MASK;
            w.u32(ring_sub(ring_add(r0, d), r1));
            x0.push(r0);
        }
        send_msg(ch, MsgType::CotBatch, session, w.finish())?;
        Ok(x0)
    }
}

pub struct OtExtReceiver {
    seeds: Vec<(Block, Block)>,
    calls: u64,
    ot_index: u128,
    hash: FixedKeyHash,
}

impl OtExtReceiver {
    pub fn setup<R: RngCore + CryptoRng>(ch: &mut dyn Channel, session: u64, rng: &mut R) -> Result<Self> {
        let seeds = base_ot_send(ch, session, BASE_OT_COUNT, rng)?;
        Ok(OtExtReceiver { seeds, calls: 0, ot_index: 0, hash: FixedKeyHash::default() })
    }

    /// Sends `u_j = G(k0_j) ^ G(k1_j) ^ r` and returns rows `t_i`.
    fn extend(&mut self, ch: &mut dyn Channel, session: u64, choices: &[bool]) -> Result<Vec<u128>> {
        let m = choices.len();
        let words = m.div_ceil(128);
        let r = pack(choices);
        let mut w = Writer(Vec::with_capacity(BASE_OT_COUNT * words * 16));
        let mut cols = Vec::with_capacity(BASE_OT_COUNT);
        for (k0, k1) in &self.seeds {
            let t = prg_column(*k0, self.calls, words);
            let g1 = prg_column(*k1, self.calls, words);
            for i in 0..words {
                w.u128(t[i] ^ g1[i] ^ r[i]);
            }
            cols.push(t);
        }
        send_msg(ch, MsgType::OtExtMatrix, session, w.finish())?;
        self.calls += 1;
        Ok(transpose(&cols, m))
    }

    fn tweaks(&mut self, m: usize) -> u128 {
        let base = self.ot_index;
        self.ot_index += m as u128;
        base
    }

    pub fn receive_chosen(&mut self, ch: &mut dyn Channel, session: u64, choices: &[bool]) -> Result<Vec<Block>> {
        let t = self.extend(ch, session, choices)?;
        let base = self.tweaks(choices.len());
        let f = expect(ch, MsgType::OtPayload)?;
        if f.payload.len() != choices.len() * 32 {
            return Err(Error::protocol("OT payload size mismatch"));
        }
        let mut r = Reader::new(&f.payload);
        let mut out = Vec::with_capacity(choices.len());
        for (i, &c) in choices.iter().enumerate() {
            let y0 = r.u128()?;
            let y1 = r.u128()?;
            let pad = self.hash.hash(Block(t[i]), base + i as u128);
            out.push(Block(if c { y1 } else { y0 }) ^ pad);
        }
        Ok(out)
    }

    pub fn receive_correlated(&mut self, ch: &mut dyn Channel, session: u64, choices: &[bool]) -> Result<Vec<u32>> {
        let t = self.extend(ch, session, choices)?;
        let base = self.tweaks(choices.len());
        let f = expect(ch, MsgType::CotBatch)?;
        if f.payload.len() != choices.len() * 4 {
            return Err(Error::protocol("COT batch size mismatch"));
        }
        let mut r = Reader::new(&f.payload);
        let mut out = Vec::with_capacity(choices.len());
        for (i, &c) in choices.iter().enumerate() {
            let tau = r.u32()?;
            let h = self.hash.hash(Block(t[i]), base + i as u128).0 as u32 & RING_MASK;
            out.push(if c { ring_add(h, tau) } else { h });
        }
        Ok(out)
    }
}
