use std::collections::BTreeMap;

use super::load::Graph;
use super::model::{IndexingTerm, Posting, PostingList};

/// `IndexingTerm -> PostingList`, one list per (edge type, source).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InvertedIndex {
    lists: BTreeMap<IndexingTerm, PostingList>,
}

impl InvertedIndex {
    pub fn from_lists(lists: impl IntoIterator<Item = PostingList>) -> Self {
        InvertedIndex {
            lists: lists
                .into_iter()
                .filter(|l| !l.is_empty())
                .map(|l| (l.term.clone(), l))
                .collect(),
        }
    }

    pub fn get(&self, term: &IndexingTerm) -> Option<&PostingList> {
        self.lists.get(term)
    }

    pub fn len_of(&self, term: &IndexingTerm) -> usize {
        self.get(term).map_or(0, PostingList::len)
    }

    pub fn lists(&self) -> impl Iterator<Item = &PostingList> {
        self.lists.values()
    }

    pub fn term_count(&self) -> usize {
        self.lists.len()
    }

    pub fn total_entries(&self) -> usize {
        self.lists.values().map(PostingList::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

pub fn build_inverted_index(graph: &Graph) -> InvertedIndex {
    let mut grouped: BTreeMap<IndexingTerm, Vec<Posting>> = BTreeMap::new();
    for e in graph.edges() {
        grouped
            .entry(IndexingTerm::new(e.edge_type.clone(), e.src))
            .or_default()
            .push(Posting {
                sort_key: e.sort_key,
                id: e.dst,
            });
    }
    InvertedIndex::from_lists(grouped.into_iter().map(|(t, e)| PostingList::new(t, e)))
}
