use rand::{CryptoRng, RngCore};

use super::ring::{ring_add, ring_mul, ring_sub, RING_MASK};
use crate::error::{Error, Result};

/// Plain matrix over Z_{2^31}, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

impl RingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<u32>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(RingMatrix { rows, cols, data: data.into_iter().map(|v| v & RING_MASK).collect() })
    }

    /// Column vector.
    pub fn vector(data: Vec<u32>) -> Result<Self> {
        let n = data.len();
        Self::new(n, 1, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RingMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn random<R: RngCore + CryptoRng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        RingMatrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.next_u32() & RING_MASK).collect(),
        }
    }

    pub fn same_shape(&self, o: &RingMatrix) -> Result<()> {
        if (self.rows, self.cols) != (o.rows, o.cols) {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        Ok(())
    }

    fn zip(&self, o: &RingMatrix, f: impl Fn(u32, u32) -> u32) -> Result<RingMatrix> {
        self.same_shape(o)?;
        Ok(RingMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn add(&self, o: &RingMatrix) -> Result<RingMatrix> {
        self.zip(o, ring_add)
    }

    pub fn sub(&self, o: &RingMatrix) -> Result<RingMatrix> {
        self.zip(o, ring_sub)
    }

    pub fn hadamard(&self, o: &RingMatrix) -> Result<RingMatrix> {
        self.zip(o, ring_mul)
    }

    pub fn scale(&self, c: u32) -> RingMatrix {
        RingMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| ring_mul(*a, c)).collect(),
        }
    }

    pub fn matmul(&self, o: &RingMatrix) -> Result<RingMatrix> {
        if self.cols != o.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        let mut out = vec![0u32; self.rows * o.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.data[i * self.cols + j];
                if a == 0 {
                    continue;
                }
                for k in 0..o.cols {
                    let idx = i * o.cols + k;
                    out[idx] = out[idx].wrapping_add(a.wrapping_mul(o.data[j * o.cols + k]));
                }
            }
        }
        out.iter_mut().for_each(|v| *v &= RING_MASK);
        Ok(RingMatrix { rows: self.rows, cols: o.cols, data: out })
    }
}

/// One party's additive share of a matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareMatrix {
    pub party: u8,
    pub value: RingMatrix,
}

impl ShareMatrix {
    pub fn new(party: u8, value: RingMatrix) -> Self {
        assert!(party < 2);
        ShareMatrix { party, value }
    }

    pub fn rows(&self) -> usize {
        self.value.rows
    }

    pub fn cols(&self) -> usize {
        self.value.cols
    }

    pub fn len(&self) -> usize {
        self.value.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.data.is_empty()
    }

    /// Share of a public matrix: party 0 holds it, party 1 holds zero.
    pub fn public(party: u8, m: &RingMatrix) -> Self {
        if party == 0 {
            ShareMatrix::new(0, m.clone())
        } else {
            ShareMatrix::new(1, RingMatrix::zeros(m.rows, m.cols))
        }
    }
}

/// One party's share of a single ring element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdditiveShare {
    pub value: u32,
    pub party: u8,
}

impl AdditiveShare {
    pub fn split<R: RngCore + CryptoRng>(x: u32, rng: &mut R) -> (AdditiveShare, AdditiveShare) {
        let a = rng.next_u32() & RING_MASK;
        (AdditiveShare { value: a, party: 0 }, AdditiveShare { value: ring_sub(x, a), party: 1 })
    }

    pub fn rec(self, other: AdditiveShare) -> u32 {
        ring_add(self.value, other.value)
    }
}

impl From<AdditiveShare> for ShareMatrix {
    fn from(s: AdditiveShare) -> Self {
        ShareMatrix::new(s.party, RingMatrix { rows: 1, cols: 1, data: vec![s.value] })
    }
}

/// Splits `x` into `(share0, share1)` with `share0` uniform.
pub fn shr<R: RngCore + CryptoRng>(x: &RingMatrix, rng: &mut R) -> (ShareMatrix, ShareMatrix) {
    let s0 = RingMatrix::random(x.rows, x.cols, rng);
    let s1 = x.sub(&s0).expect("same shape");
    (ShareMatrix::new(0, s0), ShareMatrix::new(1, s1))
}

pub fn rec(a: &ShareMatrix, b: &ShareMatrix) -> Result<RingMatrix> {
    if a.party == b.party {
        return Err(Error::Dimension("reconstruction needs one share from each party".into()));
    }
    a.value.add(&b.value)
}

/// Local share addition; no communication.
pub fn add(a: &ShareMatrix, b: &ShareMatrix) -> Result<ShareMatrix> {
    if a.party != b.party {
        return Err(Error::Dimension("adding shares of different parties".into()));
    }
    Ok(ShareMatrix::new(a.party, a.value.add(&b.value)?))
}

pub fn sub(a: &ShareMatrix, b: &ShareMatrix) -> Result<ShareMatrix> {
    if a.party != b.party {
        return Err(Error::Dimension("subtracting shares of different parties".into()));
    }
    Ok(ShareMatrix::new(a.party, a.value.sub(&b.value)?))
}

/// Adds a public constant to every element.
pub fn add_public(a: &ShareMatrix, c: u32) -> ShareMatrix {
    let pm = RingMatrix { rows: a.rows(), cols: a.cols(), data: vec![c & RING_MASK; a.len()] };
    add(a, &ShareMatrix::public(a.party, &pm)).expect("same shape")
}

/// Multiplies by a public constant.
pub fn scale(a: &ShareMatrix, c: u32) -> ShareMatrix {
    ShareMatrix::new(a.party, a.value.scale(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(17)
    }

    fn scalar(v: u32) -> RingMatrix {
        RingMatrix::new(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn share_and_reconstruct() {
        let mut r = rng();
        let (a, b) = shr(&scalar(42), &mut r);
        assert_eq!(rec(&a, &b).unwrap().data, vec![42]);
        let (a, b) = shr(&scalar(0), &mut r);
        assert_eq!(ring_add(a.value.data[0], b.value.data[0]), 0);
        let big = RingMatrix::random(100, 100, &mut r);
        let (a, b) = shr(&big, &mut r);
        assert_eq!(rec(&a, &b).unwrap(), big);
        let (c, _) = shr(&scalar(1), &mut r);
        assert!(matches!(rec(&a, &c), Err(Error::Dimension(_))));
    }

    #[test]
    fn local_addition() {
        let mut r = rng();
        let (a0, a1) = shr(&scalar(5), &mut r);
        let (b0, b1) = shr(&scalar(7), &mut r);
        let s = rec(&add(&a0, &b0).unwrap(), &add(&a1, &b1).unwrap()).unwrap();
        assert_eq!(s.data, vec![12]);
        let (z0, z1) = shr(&scalar(0), &mut r);
        assert_eq!(rec(&add(&a0, &z0).unwrap(), &add(&a1, &z1).unwrap()).unwrap().data, vec![5]);
        let (m0, m1) = shr(&scalar(RING_MASK), &mut r);
        let (o0, o1) = shr(&scalar(1), &mut r);
        assert_eq!(rec(&add(&m0, &o0).unwrap(), &add(&m1, &o1).unwrap()).unwrap().data, vec![0]);
        assert_eq!(rec(&add_public(&a0, 3), &add_public(&a1, 3)).unwrap().data, vec![8]);
        assert_eq!(rec(&scale(&a0, 3), &scale(&a1, 3)).unwrap().data, vec![15]);
    }

    #[test]
    fn matmul_small() {
        let a = RingMatrix::new(2, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let b = RingMatrix::new(3, 1, vec![1, 0, 2]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data, vec![7, 16]);
        assert!(b.matmul(&a).is_err());
    }
}
