use super::group::{Exponent, GroupContext, GroupElement, ELEMENT_LEN};
use super::keys::MasterKeyBundle;
use super::prf::{prf, prf_exp};
use crate::error::Result;
use crate::graph::{EntityId, IndexingTerm};

pub const STAG_LEN: usize = 16;
pub const XTAG_LEN: usize = ELEMENT_LEN;

/// Search token naming one encrypted posting list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct STag(pub [u8; STAG_LEN]);

/// Canonical encoding of `g^(x_t * xind(id))`, the cross tag of an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct XTag(pub [u8; XTAG_LEN]);

/// Per-tuple intersection token `g^(z_c * x_t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct XToken(pub GroupElement);

impl XToken {
    /// Raises the token to a tuple's blinding exponent, yielding its candidate xtag.
    pub fn blind(&self, y: &Exponent) -> XTag {
        XTag(self.0.exp(y).to_bytes())
    }

    pub fn to_bytes(&self) -> [u8; ELEMENT_LEN] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        GroupElement::from_bytes(bytes).map(XToken)
    }
}

pub fn stag_derive(keys: &MasterKeyBundle, term: &IndexingTerm) -> STag {
    STag(prf(&keys.k_stag, term.to_text().as_bytes()))
}

/// Parses `text` as an indexing term first; malformed terms are rejected.
pub fn stag_for_text(keys: &MasterKeyBundle, text: &str) -> Result<STag> {
    let term: IndexingTerm = text.parse()?;
    Ok(stag_derive(keys, &term))
}

/// `x_t = PRF_x(t)`.
pub fn term_exponent(keys: &MasterKeyBundle, term: &IndexingTerm) -> Exponent {
    prf_exp(&keys.k_x, term.to_text().as_bytes())
}

/// `xind = PRF_i(id)`.
pub fn id_exponent(keys: &MasterKeyBundle, id: EntityId) -> Exponent {
    prf_exp(&keys.k_i, &id.to_be_bytes())
}

/// `z_c = PRF_z(t || c)`; the 0x00 separator keeps term text and counter apart.
pub fn counter_exponent(keys: &MasterKeyBundle, term: &IndexingTerm, counter: u64) -> Exponent {
    let mut input = term.to_text().into_bytes();
    input.push(0);
    input.extend_from_slice(&counter.to_be_bytes());
    prf_exp(&keys.k_z, &input)
}

/// `y_c = xind(id) * z_c^{-1} mod p`.
pub fn blinding_exponent(
    keys: &MasterKeyBundle,
    term: &IndexingTerm,
    counter: u64,
    id: EntityId,
) -> Exponent {
    id_exponent(keys, id) * counter_exponent(keys, term, counter).invert()
}

pub fn xtag_compute(
    keys: &MasterKeyBundle,
    ctx: &GroupContext,
    term: &IndexingTerm,
    id: EntityId,
) -> XTag {
    let e = term_exponent(keys, term) * id_exponent(keys, id);
    XTag(ctx.exp_base(&e).to_bytes())
}

/// Token for tuple `counter` (1-based) of `TSet(s_term)` against `x_term`.
pub fn xtoken_compute(
    keys: &MasterKeyBundle,
    ctx: &GroupContext,
    s_term: &IndexingTerm,
    counter: u64,
    x_term: &IndexingTerm,
) -> XToken {
    let e = counter_exponent(keys, s_term, counter) * term_exponent(keys, x_term);
    XToken(ctx.exp_base(&e))
}
