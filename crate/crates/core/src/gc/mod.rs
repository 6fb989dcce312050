//! Garbled circuits and the two sorting protocols.
//!
//! Garbling is half-gates over free-XOR. Sort circuits take additive score
//! shares, add them inside the circuit, run a bitonic network descending
//! and mask the scores on the way out.

mod cache;
mod circuit;
mod garble;
mod protocol;
mod sortnet;

pub use cache::CircuitCache;
pub use circuit::{from_bits, to_bits, Bit, Builder, Circuit, Gate};
pub use garble::{evaluate, garble, GarbledCircuit, GarblerKeys};
pub use protocol::{global_sort_evaluator, global_sort_garbler, local_sort_evaluator, local_sort_garbler};
pub use sortnet::{
    bitonic_schedule, comparator_count, global_sort_circuit, index_bits, local_sort_circuit, Comparator,
    GlobalSortCircuit, LocalSortCircuit, DEFAULT_MAX_SORT, SCORE_BITS,
};
