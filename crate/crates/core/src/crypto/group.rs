use std::ops::Mul;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::Scalar;
use rand::{CryptoRng, RngCore};

/// Canonical encoding length of a group element.
pub const ELEMENT_LEN: usize = 32;

/// Exponent in Z_p.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Exponent(Scalar);

impl Exponent {
    pub(crate) fn from_scalar(s: Scalar) -> Self {
        Exponent(s)
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        loop {
            let s = Scalar::random(rng);
            if s != Scalar::ZERO {
                return Exponent(s);
            }
        }
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Option<Self> {
        Option::<Scalar>::from(Scalar::from_canonical_bytes(bytes)).map(Exponent)
    }

    /// Multiplicative inverse mod p. The exponent PRFs never return zero.
    pub fn invert(&self) -> Self {
        debug_assert!(self.0 != Scalar::ZERO);
        Exponent(self.0.invert())
    }

    pub fn is_zero(&self) -> bool {
        self.0 == Scalar::ZERO
    }
}

impl Mul for Exponent {
    type Output = Exponent;
    fn mul(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 * rhs.0)
    }
}

/// Element of the prime-order group, with a single canonical 32-byte encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupElement(RistrettoPoint);

impl GroupElement {
    pub fn to_bytes(&self) -> [u8; ELEMENT_LEN] {
        self.0.compress().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let compressed = CompressedRistretto::from_slice(bytes).ok()?;
        compressed.decompress().map(GroupElement)
    }

    pub fn exp(&self, e: &Exponent) -> GroupElement {
        GroupElement(self.0 * e.0)
    }

    pub fn add(&self, other: &GroupElement) -> GroupElement {
        GroupElement(self.0 + other.0)
    }

    pub fn sub(&self, other: &GroupElement) -> GroupElement {
        GroupElement(self.0 - other.0)
    }
}

/// Descriptor of the cyclic group used for xtags, xtokens and base OTs.
///
/// The Ristretto group over Curve25519 has prime order
/// p = 2^252 + 27742317777372353535851937790883648493 and hard DDH.
#[derive(Clone, Copy, Debug, Default)]
pub struct GroupContext;

impl GroupContext {
    pub fn new() -> Self {
        GroupContext
    }

    pub fn descriptor(&self) -> &'static str {
        "ristretto255"
    }

    /// Bits of the group order.
    pub fn order_bits(&self) -> u32 {
        253
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement(curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT)
    }

    /// g^e using the precomputed basepoint table.
    pub fn exp_base(&self, e: &Exponent) -> GroupElement {
        GroupElement(RistrettoPoint::mul_base(&e.0))
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(RistrettoPoint::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn encoding_is_canonical_roundtrip() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        let ctx = GroupContext::new();
        let e = Exponent::random(&mut rng);
        let g = ctx.exp_base(&e);
        let bytes = g.to_bytes();
        assert_eq!(GroupElement::from_bytes(&bytes), Some(g));
        assert_eq!(ctx.generator().exp(&e), g);
    }

    #[test]
    fn inverse_cancels() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2);
        let ctx = GroupContext::new();
        let a = Exponent::random(&mut rng);
        let b = Exponent::random(&mut rng);
        let lhs = ctx.exp_base(&(a * b)).exp(&b.invert());
        assert_eq!(lhs, ctx.exp_base(&a));
    }
}
