use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Unique node identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u64);

impl EntityId {
    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Lowest and highest sort-key an edge may carry.
pub const MIN_SORT_KEY: u32 = 1;
pub const MAX_SORT_KEY: u32 = 100;

/// Directed, typed edge `(src, dst, edge_type)` with an importance weight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: EntityId,
    pub dst: EntityId,
    pub edge_type: String,
    pub sort_key: u32,
}

/// Inverted index key `edge-type:id`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexingTerm {
    pub edge_type: String,
    pub source: EntityId,
}

impl IndexingTerm {
    pub fn new(edge_type: impl Into<String>, source: EntityId) -> Self {
        IndexingTerm {
            edge_type: edge_type.into(),
            source,
        }
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for IndexingTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.edge_type, self.source.0)
    }
}

pub(crate) fn valid_edge_type(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl FromStr for IndexingTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (edge_type, id) = s
            .split_once(':')
            .ok_or_else(|| Error::parse(0, format!("term '{s}' lacks ':'")))?;
        if !valid_edge_type(edge_type) {
            return Err(Error::parse(0, format!("invalid edge type in '{s}'")));
        }
        let id: u64 = id
            .parse()
            .map_err(|_| Error::parse(edge_type.len() + 1, format!("invalid id in '{s}'")))?;
        Ok(IndexingTerm::new(edge_type, EntityId(id)))
    }
}

/// One `(sort_key, id)` entry of a posting list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    pub sort_key: u32,
    pub id: EntityId,
}

/// Adjacency list of one indexing term, in stored order: descending sort-key,
/// ascending id on ties.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PostingList {
    pub term: IndexingTerm,
    pub entries: Vec<Posting>,
}

impl PostingList {
    pub fn new(term: IndexingTerm, mut entries: Vec<Posting>) -> Self {
        sort_stored_order(&mut entries);
        PostingList { term, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.entries.iter().map(|p| p.id)
    }

    pub fn sort_key_of(&self, id: EntityId) -> Option<u32> {
        self.entries.iter().find(|p| p.id == id).map(|p| p.sort_key)
    }
}

pub(crate) fn sort_stored_order(entries: &mut [Posting]) {
    entries.sort_by(|a, b| b.sort_key.cmp(&a.sort_key).then(a.id.cmp(&b.id)));
}
