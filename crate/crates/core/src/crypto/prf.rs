use aes::Aes128;
use cmac::{Cmac, Mac};
use curve25519_dalek::Scalar;
use rand::{CryptoRng, RngCore};

use super::group::Exponent;

pub const PRF_KEY_LEN: usize = 16;

/// A 128-bit AES-CMAC key.
#[derive(Clone, PartialEq, Eq)]
pub struct PrfKey([u8; PRF_KEY_LEN]);

impl PrfKey {
    pub fn from_bytes(bytes: [u8; PRF_KEY_LEN]) -> Self {
        PrfKey(bytes)
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; PRF_KEY_LEN];
        rng.fill_bytes(&mut bytes);
        PrfKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; PRF_KEY_LEN] {
        &self.0
    }
}

impl std::fmt::Debug for PrfKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PrfKey(..)")
    }
}

fn cmac(key: &PrfKey, parts: &[&[u8]]) -> [u8; 16] {
    let mut mac = <Cmac<Aes128> as Mac>::new_from_slice(&key.0).expect("16-byte key");
    for part in parts {
        mac.update(part);
    }
    mac.finalize().into_bytes().into()
}

/// 128-bit PRF output.
pub fn prf(key: &PrfKey, input: &[u8]) -> [u8; 16] {
    cmac(key, &[&[0x00], input])
}

/// PRF into the exponent group Z_p.
///
/// Two CMAC blocks form a 256-bit candidate, truncated to 253 bits and
/// rejected unless it is a canonical non-zero scalar, so the output is uniform
/// on [1, p).
pub fn prf_exp(key: &PrfKey, input: &[u8]) -> Exponent {
    for attempt in 0u32.. {
        let ctr = attempt.to_be_bytes();
        let lo = cmac(key, &[&[0x01], &ctr, input]);
        let hi = cmac(key, &[&[0x02], &ctr, input]);
        let mut bytes = [0u8; 32];
        bytes[..16].copy_from_slice(&lo);
        bytes[16..].copy_from_slice(&hi);
        bytes[31] &= 0x1f;
        let candidate: Option<Scalar> = Scalar::from_canonical_bytes(bytes).into();
        if let Some(s) = candidate {
            if s != Scalar::ZERO {
                return Exponent::from_scalar(s);
            }
        }
    }
    unreachable!("rejection sampling exhausted u32 counter")
}
