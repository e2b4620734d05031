use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::{EntityId, RelationId, Vocab};
use crate::error::Result;

pub type Triple = (EntityId, RelationId, EntityId);

/// Deduplicated set of facts with a `(head, relation) → sorted tails` index.
/// Immutable once built; shared reads are safe across threads.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TripleStore {
    triples: BTreeSet<Triple>,
    successors: BTreeMap<(EntityId, RelationId), Vec<EntityId>>,
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a fact; returns `false` for duplicates.
    pub fn insert(&mut self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        if !self.triples.insert((head, relation, tail)) {
            return false;
        }
        let tails = self.successors.entry((head, relation)).or_default();
        let pos = tails.binary_search(&tail).unwrap_or_else(|p| p);
        tails.insert(pos, tail);
        true
    }

    pub fn contains(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.successors(head, relation).binary_search(&tail).is_ok()
    }

    /// Sorted tails reachable from `head` through `relation`.
    pub fn successors(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.successors
            .get(&(head, relation))
            .map_or(&[][..], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Triple> + '_ {
        self.triples.iter().copied()
    }

    /// Every fact reachable through the successor index, for consistency
    /// checks against the triple set.
    pub fn iter_index(&self) -> impl Iterator<Item = Triple> + '_ {
        self.successors
            .iter()
            .flat_map(|(&(h, r), tails)| tails.iter().map(move |&t| (h, r, t)))
    }

    pub fn relations(&self) -> BTreeSet<RelationId> {
        self.triples.iter().map(|t| t.1).collect()
    }

    pub fn entities(&self) -> BTreeSet<EntityId> {
        self.triples.iter().flat_map(|t| [t.0, t.2]).collect()
    }

    /// Closes the store under inversion: `(h, r, t)` ⟹ `(t, *r, h)`, with `*`
    /// an involution on relation tokens. Idempotent.
    pub fn add_inverses(&self, vocab: &mut Vocab) -> Result<TripleStore> {
        let mut out = self.clone();
        for (h, r, t) in self.iter() {
            let inv = vocab.inverse_of(r)?;
            out.insert(t, inv, h);
        }
        Ok(out)
    }
}

impl FromIterator<Triple> for TripleStore {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut s = TripleStore::new();
        for (h, r, t) in iter {
            s.insert(h, r, t);
        }
        s
    }
}
