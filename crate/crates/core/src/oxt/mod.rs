//! Encrypted search: index access, boolean queries against the XSet, and
//! the front-end halves (token generation, decryption, disjunction rewrite).

mod client;
mod formula;
mod search;

#[cfg(test)]
mod tests;

pub use client::{decrypt_results, or_rewrite, xtoken_rows};
pub use formula::BoolFormula;
pub use search::{
    boolean_query, decode_xtokens, encode_xtokens, filter_tuples, index_access, OxtCounters, TokenBundle,
};
