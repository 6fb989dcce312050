use std::io::Write;
use std::path::Path;

use rand::{CryptoRng, RngCore};

use super::prf::{PrfKey, PRF_KEY_LEN};
use crate::error::{Error, IoContext, Result};

pub const KEYSTORE_MAGIC: &[u8; 4] = b"EGKS";
pub const KEYSTORE_VERSION: u16 = 1;

/// The front-end's secret keys. Index servers never receive any of them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterKeyBundle {
    pub k_stag: PrfKey,
    pub k_x: PrfKey,
    pub k_i: PrfKey,
    pub k_z: PrfKey,
    pub k_enc: PrfKey,
}

impl MasterKeyBundle {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        MasterKeyBundle {
            k_stag: PrfKey::random(rng),
            k_x: PrfKey::random(rng),
            k_i: PrfKey::random(rng),
            k_z: PrfKey::random(rng),
            k_enc: PrfKey::random(rng),
        }
    }

    fn keys(&self) -> [&PrfKey; 5] {
        [&self.k_stag, &self.k_x, &self.k_i, &self.k_z, &self.k_enc]
    }

    /// All raw key bytes, for transcript scanning.
    pub fn key_bytes(&self) -> Vec<[u8; PRF_KEY_LEN]> {
        self.keys().iter().map(|k| *k.as_bytes()).collect()
    }

    /// Keystore layout: magic, u16 version, then five u32-length-prefixed keys (big-endian).
    pub fn to_keystore_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 2 + 5 * (4 + PRF_KEY_LEN));
        out.extend_from_slice(KEYSTORE_MAGIC);
        out.extend_from_slice(&KEYSTORE_VERSION.to_be_bytes());
        for k in self.keys() {
            out.extend_from_slice(&(PRF_KEY_LEN as u32).to_be_bytes());
            out.extend_from_slice(k.as_bytes());
        }
        out
    }

    pub fn from_keystore_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("keystore: {m}"));
        if bytes.len() < 6 || &bytes[..4] != KEYSTORE_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_be_bytes([bytes[4], bytes[5]]);
        if version != KEYSTORE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut pos = 6;
        let mut keys = Vec::with_capacity(5);
        for _ in 0..5 {
            let len_bytes = bytes.get(pos..pos + 4).ok_or_else(|| bad("truncated"))?;
            let len = u32::from_be_bytes(len_bytes.try_into().unwrap()) as usize;
            pos += 4;
            if len != PRF_KEY_LEN {
                return Err(bad("unexpected key length"));
            }
            let key = bytes.get(pos..pos + len).ok_or_else(|| bad("truncated"))?;
            keys.push(PrfKey::from_bytes(key.try_into().unwrap()));
            pos += len;
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let mut it = keys.into_iter();
        Ok(MasterKeyBundle {
            k_stag: it.next().unwrap(),
            k_x: it.next().unwrap(),
            k_i: it.next().unwrap(),
            k_z: it.next().unwrap(),
            k_enc: it.next().unwrap(),
        })
    }

    /// Writes the keystore readable by the owner only.
    pub fn write_keystore(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).io_context(|| format!("creating {}", parent.display()))?;
        }
        let mut opts = std::fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts
            .open(path)
            .io_context(|| format!("creating keystore {}", path.display()))?;
        f.write_all(&self.to_keystore_bytes())
            .io_context(|| format!("writing keystore {}", path.display()))
    }

    pub fn read_keystore(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).io_context(|| format!("reading keystore {}", path.display()))?;
        Self::from_keystore_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn keystore_roundtrip_and_rejects_garbage() {
        let keys = MasterKeyBundle::generate(&mut rand_chacha::ChaCha20Rng::seed_from_u64(3));
        let bytes = keys.to_keystore_bytes();
        assert_eq!(bytes.len(), 6 + 5 * 20);
        assert_eq!(MasterKeyBundle::from_keystore_bytes(&bytes).unwrap(), keys);
        assert!(MasterKeyBundle::from_keystore_bytes(&bytes[..50]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(MasterKeyBundle::from_keystore_bytes(&wrong).is_err());
    }
}
