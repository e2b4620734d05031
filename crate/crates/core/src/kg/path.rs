use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{EntityId, RelationId, TripleStore};
use crate::error::{Error, Result};
use crate::Rng;

/// `e_h, r_1, [e_1,] …, r_t, e_t`. Intermediates are present only for
/// enhanced paths and then hold exactly `t − 1` entities.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathInstance {
    pub head: EntityId,
    pub relations: Vec<RelationId>,
    pub intermediates: Option<Vec<EntityId>>,
    pub tail: EntityId,
}

impl PathInstance {
    pub fn new(
        head: EntityId,
        relations: Vec<RelationId>,
        intermediates: Option<Vec<EntityId>>,
        tail: EntityId,
    ) -> Result<Self> {
        if relations.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(mids) = &intermediates {
            if mids.len() + 1 != relations.len() {
                return Err(Error::InvalidPath(format!(
                    "{} relations need {} intermediates, got {}",
                    relations.len(),
                    relations.len() - 1,
                    mids.len()
                )));
            }
        }
        Ok(PathInstance {
            head,
            relations,
            intermediates,
            tail,
        })
    }

    pub fn base(head: EntityId, relations: Vec<RelationId>, tail: EntityId) -> Result<Self> {
        Self::new(head, relations, None, tail)
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn is_enhanced(&self) -> bool {
        self.intermediates.is_some()
    }

    /// Gold entity after hop `i` (1-based); `None` for unknown intermediates
    /// and for an unknown ([`EntityId::UNK`]) tail.
    pub fn entity_at(&self, i: usize) -> Option<EntityId> {
        let e = if i == self.len() {
            Some(self.tail)
        } else if i >= 1 && i < self.len() {
            self.intermediates.as_ref().map(|m| m[i - 1])
        } else {
            None
        };
        e.filter(|e| !e.is_unk())
    }

    /// Hop-by-hop membership of every `(e_{i−1}, r_i, e_i)` in `store`.
    /// Base paths are never valid.
    pub fn is_valid_in(&self, store: &TripleStore) -> bool {
        let Some(mids) = &self.intermediates else {
            return false;
        };
        let mut prev = self.head;
        for (i, &r) in self.relations.iter().enumerate() {
            let next = mids.get(i).copied().unwrap_or(self.tail);
            if !store.contains(prev, r, next) {
                return false;
            }
            prev = next;
        }
        true
    }

    /// Keeps the first `max_len` hops. The severed tail becomes the hop
    /// `max_len` entity, or [`EntityId::UNK`] when intermediates are unknown.
    pub fn truncated(&self, max_len: usize) -> PathInstance {
        if self.len() <= max_len {
            return self.clone();
        }
        let relations = self.relations[..max_len].to_vec();
        match &self.intermediates {
            Some(m) => PathInstance {
                head: self.head,
                relations,
                intermediates: Some(m[..max_len - 1].to_vec()),
                tail: m[max_len - 1],
            },
            None => PathInstance {
                head: self.head,
                relations,
                intermediates: None,
                tail: EntityId::UNK,
            },
        }
    }
}

/// Fills in intermediates by randomised depth-first search over `store`.
///
/// At every hop the successors are visited in a shuffled order and the first
/// one admitting a completion to the tail is kept, so each completable
/// successor is equally likely. Dead `(hop, entity)` states are memoised.
pub fn enhance_path(store: &TripleStore, path: &PathInstance, rng: &mut Rng) -> Result<PathInstance> {
    if path.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut dead: BTreeSet<(usize, EntityId)> = BTreeSet::new();
    let mut chosen = Vec::with_capacity(path.len() - 1);
    if search(store, path, 0, path.head, &mut chosen, &mut dead, rng) {
        Ok(PathInstance {
            head: path.head,
            relations: path.relations.clone(),
            intermediates: Some(chosen),
            tail: path.tail,
        })
    } else {
        Err(Error::NotFound)
    }
}

fn search(
    store: &TripleStore,
    path: &PathInstance,
    hop: usize,
    at: EntityId,
    chosen: &mut Vec<EntityId>,
    dead: &mut BTreeSet<(usize, EntityId)>,
    rng: &mut Rng,
) -> bool {
    let r = path.relations[hop];
    if hop + 1 == path.len() {
        return store.contains(at, r, path.tail);
    }
    if dead.contains(&(hop, at)) {
        return false;
    }
    let mut next: Vec<EntityId> = store.successors(at, r).to_vec();
    next.shuffle(rng);
    for e in next {
        chosen.push(e);
        if search(store, path, hop + 1, e, chosen, dead, rng) {
            return true;
        }
        chosen.pop();
    }
    dead.insert((hop, at));
    false
}
