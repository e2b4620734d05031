use alloc::string::String;
use alloc::vec::Vec;

use super::{EntityId, PathInstance};

pub const MAX_PATH_LEN: usize = 8;
pub const MAX_PATHS_PER_PAIR: usize = 30;

/// A labelled entity pair for one query relation with its connecting paths.
#[derive(Clone, Debug, PartialEq)]
pub struct KbcExample {
    pub head: EntityId,
    pub tail: EntityId,
    pub label: bool,
    pub paths: Vec<PathInstance>,
}

impl KbcExample {
    /// Pairs without paths are kept and scored as −∞.
    pub fn has_no_paths(&self) -> bool {
        self.paths.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KbcSplit {
    pub train: Vec<KbcExample>,
    pub dev: Vec<KbcExample>,
    pub test: Vec<KbcExample>,
}

/// Per-query-relation splits; `queries[i]` names the relation of `splits[i]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KbcDataset {
    pub queries: Vec<String>,
    pub splits: Vec<KbcSplit>,
}

impl KbcDataset {
    pub fn preprocess(mut self, max_len: usize, max_paths: usize) -> Self {
        for s in &mut self.splits {
            for part in [&mut s.train, &mut s.dev, &mut s.test] {
                let taken = core::mem::take(part);
                *part = preprocess_kbc(taken, max_len, max_paths);
            }
        }
        self
    }
}

/// Truncates every path to its first `max_len` hops and keeps the first
/// `max_paths` paths of each pair, in input order.
pub fn preprocess_kbc(examples: Vec<KbcExample>, max_len: usize, max_paths: usize) -> Vec<KbcExample> {
    examples
        .into_iter()
        .map(|mut ex| {
            ex.paths.truncate(max_paths);
            for p in &mut ex.paths {
                *p = p.truncated(max_len);
            }
            ex
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::RelationId;
    use alloc::vec;

    fn path(len: u32) -> PathInstance {
        let rels = (0..len).map(RelationId).collect();
        let mids = (1..len).map(|i| EntityId(100 + i)).collect();
        PathInstance::new(EntityId(0), rels, Some(mids), EntityId(1)).unwrap()
    }

    #[test]
    fn caps_paths_and_lengths() {
        let ex = KbcExample {
            head: EntityId(0),
            tail: EntityId(1),
            label: true,
            paths: (0..45).map(|i| path(1 + i % 11)).collect(),
        };
        let out = preprocess_kbc(vec![ex.clone()], MAX_PATH_LEN, MAX_PATHS_PER_PAIR);
        assert_eq!(out[0].paths.len(), 30);
        assert!(out[0].paths.iter().all(|p| p.len() <= 8));
        assert_eq!(out[0].paths[..8], ex.paths[..8]);
        let long = &out[0].paths[10];
        assert_eq!(long.len(), 8);
        assert_eq!(long.tail, EntityId(108));
    }

    #[test]
    fn short_inputs_unchanged() {
        let ex = KbcExample {
            head: EntityId(0),
            tail: EntityId(1),
            label: false,
            paths: vec![path(1), path(3), path(8)],
        };
        assert_eq!(preprocess_kbc(vec![ex.clone()], 8, 30), vec![ex]);
    }
}
