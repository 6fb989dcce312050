use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::beaver::{MultiplicationTriple, TripleShape};
use super::ring::{ring_add, ring_mul, ring_sub, RING_BITS};
use super::share::{shr, RingMatrix, ShareMatrix};
use crate::error::{Error, Result};
use crate::ot::{OtExtReceiver, OtExtSender};
use crate::transport::Channel;
use crate::wire::{Reader, Writer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    Secure,
    DealerTest,
}

/// Scalar products `X[x] * Y[y]` accumulated into `Z[z]`.
fn product_terms(shape: TripleShape) -> Vec<(usize, usize, usize)> {
    match shape {
        TripleShape::Matrix { s, t, u } => {
            let mut v = Vec::with_capacity(s * t * u);
            for i in 0..s {
                for j in 0..t {
                    for k in 0..u {
                        v.push((i * t + j, j * u + k, i * u + k));
                    }
                }
            }
            v
        }
        TripleShape::Hadamard { rows, cols } => (0..rows * cols).map(|e| (e, e, e)).collect(),
    }
}

pub(crate) fn encode_shape(w: &mut Writer, shape: TripleShape) {
    match shape {
        TripleShape::Matrix { s, t, u } => {
            w.u8(0).u32(s as u32).u32(t as u32).u32(u as u32);
        }
        TripleShape::Hadamard { rows, cols } => {
            w.u8(1).u32(rows as u32).u32(cols as u32);
        }
    }
}

pub(crate) fn decode_shape(r: &mut Reader<'_>) -> Result<TripleShape> {
    let shape = match r.u8()? {
        0 => TripleShape::Matrix { s: r.u32()? as usize, t: r.u32()? as usize, u: r.u32()? as usize },
        1 => TripleShape::Hadamard { rows: r.u32()? as usize, cols: r.u32()? as usize },
        t => return Err(Error::protocol(format!("unknown triple shape tag {t}"))),
    };
    if shape.dims().iter().any(|(a, b)| *a == 0 || *b == 0) {
        return Err(Error::protocol("empty triple shape"));
    }
    Ok(shape)
}

/// Correlated-OT triple generation. Each party samples its own X and Y
/// halves; the cross terms `X_0×Y_1` and `X_1×Y_0` are computed with
/// 31 COTs per scalar product (correlation `x * 2^b`, choice = bit b of
/// the Y-share). Party 0 acts as COT sender first, then party 1.
pub fn triple_gen_cot<R: RngCore + CryptoRng>(
    party: u8,
    shapes: &[TripleShape],
    ch: &mut dyn Channel,
    session: u64,
    rng: &mut R,
) -> Result<Vec<MultiplicationTriple>> {
    let mut halves = Vec::with_capacity(shapes.len());
    for &shape in shapes {
        let [dx, dy, _] = shape.dims();
        let x = RingMatrix::random(dx.0, dx.1, rng);
        let y = RingMatrix::random(dy.0, dy.1, rng);
        let z = shape.product(&x, &y)?;
        halves.push((shape, x, y, z));
    }

    // Sender correlations and receiver choices over all scalar products.
    let mut deltas = Vec::new();
    let mut choices = Vec::new();
    for (shape, x, y, _) in &halves {
        for (xi, yi, _) in product_terms(*shape) {
            for b in 0..RING_BITS {
                deltas.push(ring_mul(x.data[xi], 1 << b));
                choices.push(y.data[yi] >> b & 1 == 1);
            }
        }
    }

    let (sent, received) = if party == 0 {
        let mut sender = OtExtSender::setup(ch, session, rng)?;
        let mut receiver = OtExtReceiver::setup(ch, session, rng)?;
        let sent = sender.send_correlated(ch, session, &deltas)?;
        let received = receiver.receive_correlated(ch, session, &choices)?;
        (sent, received)
    } else {
        let mut receiver = OtExtReceiver::setup(ch, session, rng)?;
        let mut sender = OtExtSender::setup(ch, session, rng)?;
        let received = receiver.receive_correlated(ch, session, &choices)?;
        let sent = sender.send_correlated(ch, session, &deltas)?;
        (sent, received)
    };

    let mut pos = 0;
    let mut out = Vec::with_capacity(halves.len());
    for (shape, x, y, mut z) in halves {
        for (_, _, zi) in product_terms(shape) {
            let mut acc = z.data[zi];
            for _ in 0..RING_BITS {
                acc = ring_add(ring_sub(acc, sent[pos]), received[pos]);
                pos += 1;
            }
            z.data[zi] = acc;
        }
        out.push(MultiplicationTriple {
            shape,
            x: ShareMatrix::new(party, x),
            y: ShareMatrix::new(party, y),
            z: ShareMatrix::new(party, z),
        });
    }
    Ok(out)
}

/// Trusted-dealer triples for tests and benches. Both parties derive the
/// same batch from `(seed, tag)` and keep their own halves.
pub fn dealer_triple_gen(
    mode: RunMode,
    shapes: &[TripleShape],
    seed: u64,
    tag: u64,
) -> Result<(Vec<MultiplicationTriple>, Vec<MultiplicationTriple>)> {
    if mode == RunMode::Secure {
        return Err(Error::Config("dealer triples are refused in secure run mode".into()));
    }
    let mut h = Sha256::new();
    h.update(b"dealer");
    h.update(seed.to_be_bytes());
    h.update(tag.to_be_bytes());
    let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
    let mut p0 = Vec::with_capacity(shapes.len());
    let mut p1 = Vec::with_capacity(shapes.len());
    for &shape in shapes {
        let [dx, dy, _] = shape.dims();
        let x = RingMatrix::random(dx.0, dx.1, &mut rng);
        let y = RingMatrix::random(dy.0, dy.1, &mut rng);
        let z = shape.product(&x, &y)?;
        let (x0, x1) = shr(&x, &mut rng);
        let (y0, y1) = shr(&y, &mut rng);
        let (z0, z1) = shr(&z, &mut rng);
        p0.push(MultiplicationTriple { shape, x: x0, y: y0, z: z0 });
        p1.push(MultiplicationTriple { shape, x: x1, y: y1, z: z1 });
    }
    Ok((p0, p1))
}
