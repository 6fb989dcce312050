use super::share::{RingMatrix, ShareMatrix};
use crate::error::{Error, Result};
use crate::transport::{expect, send_msg, Channel, MsgType};
use crate::wire::{Reader, Writer};

/// Product a triple is good for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TripleShape {
    /// `X: s×t`, `Y: t×u`, `Z = X×Y: s×u`.
    Matrix { s: usize, t: usize, u: usize },
    /// Elementwise product of two `rows×cols` matrices.
    Hadamard { rows: usize, cols: usize },
}

impl TripleShape {
    pub fn scalar() -> Self {
        TripleShape::Hadamard { rows: 1, cols: 1 }
    }

    pub fn dims(&self) -> [(usize, usize); 3] {
        match *self {
            TripleShape::Matrix { s, t, u } => [(s, t), (t, u), (s, u)],
            TripleShape::Hadamard { rows, cols } => [(rows, cols); 3],
        }
    }

    pub fn product(&self, a: &RingMatrix, b: &RingMatrix) -> Result<RingMatrix> {
        match self {
            TripleShape::Matrix { .. } => a.matmul(b),
            TripleShape::Hadamard { .. } => a.hadamard(b),
        }
    }
}

/// One party's half of a multiplication triple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiplicationTriple {
    pub shape: TripleShape,
    pub x: ShareMatrix,
    pub y: ShareMatrix,
    pub z: ShareMatrix,
}

impl MultiplicationTriple {
    pub fn party(&self) -> u8 {
        self.x.party
    }

    /// Builds a Hadamard triple from scalar triples `(x, y, z)`.
    pub fn from_scalars(party: u8, scalars: &[(u32, u32, u32)]) -> Result<Self> {
        let col = |f: fn(&(u32, u32, u32)) -> u32| {
            RingMatrix::vector(scalars.iter().map(f).collect()).map(|m| ShareMatrix::new(party, m))
        };
        Ok(MultiplicationTriple {
            shape: TripleShape::Hadamard { rows: scalars.len(), cols: 1 },
            x: col(|t| t.0)?,
            y: col(|t| t.1)?,
            z: col(|t| t.2)?,
        })
    }
}

fn encode_matrix(w: &mut Writer, m: &RingMatrix) {
    w.u32(m.rows as u32).u32(m.cols as u32);
    for v in &m.data {
        w.u32(*v);
    }
}

fn decode_matrix(r: &mut Reader<'_>) -> Result<RingMatrix> {
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if rows.saturating_mul(cols) > r.remaining() / 4 {
        return Err(Error::protocol("matrix larger than payload"));
    }
    let data = (0..rows * cols).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    RingMatrix::new(rows, cols, data)
}

/// Beaver multiplication: one exchange of the blinded `E = A - X`,
/// `F = B - Y`, then `C_i = i*E×F + X_i×F + E×Y_i + Z_i`.
///
/// Party 0 sends its half first so the exchange cannot deadlock on
/// bounded transports.
pub fn mul(
    a: &ShareMatrix,
    b: &ShareMatrix,
    triple: &MultiplicationTriple,
    ch: &mut dyn Channel,
    session: u64,
) -> Result<ShareMatrix> {
    let party = a.party;
    if b.party != party || triple.party() != party {
        return Err(Error::Dimension("mixed parties in multiplication".into()));
    }
    let [dx, dy, _] = triple.shape.dims();
    if (a.rows(), a.cols()) != dx || (b.rows(), b.cols()) != dy {
        return Err(Error::Triple(format!(
            "triple shape {:?} does not fit {}x{} * {}x{}",
            triple.shape,
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let e_own = a.value.sub(&triple.x.value)?;
    let f_own = b.value.sub(&triple.y.value)?;
    let mut w = Writer::new();
    encode_matrix(&mut w, &e_own);
    encode_matrix(&mut w, &f_own);
    let outgoing = w.finish();
    let incoming = if party == 0 {
        send_msg(ch, MsgType::MulExchange, session, outgoing)?;
        expect(ch, MsgType::MulExchange)?.payload
    } else {
        let p = expect(ch, MsgType::MulExchange)?.payload;
        send_msg(ch, MsgType::MulExchange, session, outgoing)?;
        p
    };
    let mut r = Reader::new(&incoming);
    let e_other = decode_matrix(&mut r)?;
    let f_other = decode_matrix(&mut r)?;
    r.end()?;
    let e = e_own.add(&e_other)?;
    let f = f_own.add(&f_other)?;
    let sh = triple.shape;
    let mut c = sh.product(&triple.x.value, &f)?;
    c = c.add(&sh.product(&e, &triple.y.value)?)?;
    c = c.add(&triple.z.value)?;
    if party == 1 {
        c = c.add(&sh.product(&e, &f)?)?;
    }
    Ok(ShareMatrix::new(party, c))
}
