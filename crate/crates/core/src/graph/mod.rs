//! Plaintext social graph: ingestion, inverted index, and the reference
//! engine that every encrypted-path result is checked against.

mod index;
mod load;
mod model;
mod plain;
mod synth;

pub use index::{build_inverted_index, InvertedIndex};
pub use load::{load_edge_list, parse_edge_list, Graph, WeightPolicy};
pub use model::{
    EntityId, Edge, IndexingTerm, Posting, PostingList, MAX_SORT_KEY, MIN_SORT_KEY,
};
pub(crate) use model::valid_edge_type;
#[cfg(test)]
pub(crate) use model::sort_stored_order;
pub use plain::{apply_weights, cover_terms, PlainEngine, ScoredId, TermWeights};
pub use synth::{random_graph, random_query, SynthConfig};
