use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::crypto::{Block, Exponent, GroupContext, GroupElement, ELEMENT_LEN};
use crate::error::{Error, Result};
use crate::transport::{expect, send_msg, Channel, MsgType};

/// Security parameter: number of base OTs seeding one extension.
pub const BASE_OT_COUNT: usize = 128;

fn kdf(index: usize, a: &GroupElement, b: &GroupElement, shared: &GroupElement) -> Block {
    let mut h = Sha256::new();
    h.update((index as u64).to_be_bytes());
    h.update(a.to_bytes());
    h.update(b.to_bytes());
    h.update(shared.to_bytes());
    Block::from_bytes(&h.finalize()[..16])
}

/// Sender side of `n` random OTs: returns the key pairs `(k0, k1)`.
pub fn base_ot_send<R: RngCore + CryptoRng>(
    ch: &mut dyn Channel,
    session: u64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(Block, Block)>> {
    let ctx = GroupContext::new();
    let a = Exponent::random(rng);
    let big_a = ctx.exp_base(&a);
    send_msg(ch, MsgType::OtBaseSender, session, big_a.to_bytes().to_vec())?;
    let f = expect(ch, MsgType::OtBaseReceiver)?;
    if f.payload.len() != n * ELEMENT_LEN {
        return Err(Error::protocol("base OT: wrong number of receiver points"));
    }
    let a_a = big_a.exp(&a);
    f.payload
        .chunks_exact(ELEMENT_LEN)
        .enumerate()
        .map(|(i, c)| {
            let b = GroupElement::from_bytes(c).ok_or_else(|| Error::protocol("base OT: bad point"))?;
            let ab = b.exp(&a);
            Ok((kdf(i, &big_a, &b, &ab), kdf(i, &big_a, &b, &ab.sub(&a_a))))
        })
        .collect()
}

/// Receiver side: returns `k_{c_i}` for each choice bit.
pub fn base_ot_receive<R: RngCore + CryptoRng>(
    ch: &mut dyn Channel,
    session: u64,
    choices: &[bool],
    rng: &mut R,
) -> Result<Vec<Block>> {
    let ctx = GroupContext::new();
    let f = expect(ch, MsgType::OtBaseSender)?;
    let big_a = GroupElement::from_bytes(&f.payload).ok_or_else(|| Error::protocol("base OT: bad point"))?;
    let mut payload = Vec::with_capacity(choices.len() * ELEMENT_LEN);
    let mut secrets = Vec::with_capacity(choices.len());
    for &c in choices {
        let b = Exponent::random(rng);
        let mut big_b = ctx.exp_base(&b);
        if c {
            big_b = big_b.add(&big_a);
        }
        payload.extend_from_slice(&big_b.to_bytes());
        secrets.push((b, big_b));
    }
    send_msg(ch, MsgType::OtBaseReceiver, session, payload)?;
    Ok(secrets
        .iter()
        .enumerate()
        .map(|(i, (b, big_b))| kdf(i, &big_a, big_b, &big_a.exp(b)))
        .collect())
}
