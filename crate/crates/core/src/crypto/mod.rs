//! Deterministic primitives shared by the builder, the front-end and the
//! index servers.
//!
//! Every function here is pure once the master keys exist, so they can be
//! called from any number of sessions without coordination.

mod block;
mod group;
mod idenc;
mod keys;
mod prf;
mod shard;
mod tokens;

pub use block::{Block, FixedKeyHash, Prg};
pub use group::{Exponent, GroupContext, GroupElement, ELEMENT_LEN};
pub use idenc::{decrypt_id, encrypt_id, term_key, Ciphertext, TermKey, CIPHERTEXT_LEN};
pub use keys::{MasterKeyBundle, KEYSTORE_MAGIC, KEYSTORE_VERSION};
pub use prf::{prf, prf_exp, PrfKey, PRF_KEY_LEN};
pub use shard::{hash_to_shard, ShardHasher};
pub use tokens::{
    blinding_exponent, counter_exponent, id_exponent, stag_derive, stag_for_text,
    term_exponent, xtag_compute, xtoken_compute, STag, XTag, XToken, STAG_LEN, XTAG_LEN,
};
