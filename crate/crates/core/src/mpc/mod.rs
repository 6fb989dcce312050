//! Two-party arithmetic on additive shares in Z_{2^31}.

mod beaver;
mod pool;
mod ring;
mod share;
mod triple;

#[cfg(test)]
mod tests;

pub use beaver::{mul, MultiplicationTriple, TripleShape};
pub use pool::{
    acquire_follower, acquire_leader, combine_scalars, refill_follower, refill_leader, Exhaustion, PoolConfig,
    TriplePool, TripleSource, SCALAR, SCALAR_TRIPLE_BYTES,
};
pub use ring::{ring_add, ring_mul, ring_neg, ring_sub, RING_BITS, RING_MASK};
pub use share::{add, AdditiveShare, add_public, rec, scale, shr, sub, RingMatrix, ShareMatrix};
pub use triple::{dealer_triple_gen, triple_gen_cot, RunMode};
