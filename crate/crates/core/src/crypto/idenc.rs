use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes128Gcm, Nonce};
use rand::{CryptoRng, RngCore};

use super::keys::MasterKeyBundle;
use super::prf::prf;
use crate::error::{Error, Result};
use crate::graph::{EntityId, IndexingTerm};

const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;
/// nonce || encrypted 64-bit id || GCM tag
pub const CIPHERTEXT_LEN: usize = NONCE_LEN + 8 + TAG_LEN;

/// Per-term identifier key `K_t = PRF(k_enc, t)`.
#[derive(Clone)]
pub struct TermKey([u8; 16]);

impl TermKey {
    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        TermKey(bytes)
    }
}

impl std::fmt::Debug for TermKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TermKey(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ciphertext(pub [u8; CIPHERTEXT_LEN]);

pub fn term_key(keys: &MasterKeyBundle, term: &IndexingTerm) -> TermKey {
    TermKey(prf(&keys.k_enc, term.to_text().as_bytes()))
}

pub fn encrypt_id<R: RngCore + CryptoRng>(key: &TermKey, id: EntityId, rng: &mut R) -> Ciphertext {
    let cipher = Aes128Gcm::new(&key.0.into());
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let body = cipher
        .encrypt(Nonce::from_slice(&nonce), id.to_be_bytes().as_slice())
        .expect("AES-GCM encryption of 8 bytes cannot fail");
    let mut out = [0u8; CIPHERTEXT_LEN];
    out[..NONCE_LEN].copy_from_slice(&nonce);
    out[NONCE_LEN..].copy_from_slice(&body);
    Ciphertext(out)
}

pub fn decrypt_id(key: &TermKey, ct: &Ciphertext) -> Result<EntityId> {
    let cipher = Aes128Gcm::new(&key.0.into());
    let plain = cipher
        .decrypt(Nonce::from_slice(&ct.0[..NONCE_LEN]), &ct.0[NONCE_LEN..])
        .map_err(|_| Error::Decrypt)?;
    let bytes: [u8; 8] = plain.as_slice().try_into().map_err(|_| Error::Decrypt)?;
    Ok(EntityId(u64::from_be_bytes(bytes)))
}
