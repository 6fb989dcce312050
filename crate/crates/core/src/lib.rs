//! Encrypted social-graph search.
//!
//! A trusted front-end holds the master keys and plans queries; two
//! non-colluding clusters of index servers evaluate boolean queries over
//! encrypted posting lists, score results on additive shares and rank them
//! with garbled bitonic sorting networks.

pub mod bench;
pub mod crypto;
pub mod edb;
pub mod frontend;
pub mod gc;
mod error;
pub mod graph;
pub mod leakage;
pub mod mpc;
pub mod oxt;
pub mod ot;
pub mod planner;
pub mod proto;
pub mod server;
pub mod transport;
mod wire;

pub use error::{Error, Result};
