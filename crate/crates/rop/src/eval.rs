//! Parallel evaluation. Results are collected in input order, so output is
//! identical for any thread count.

use rayon::prelude::*;
use rop_core::kbc::{mean_average_precision, Aggregation, KbcModel, MapReport, Split};
use rop_core::kg::KbcDataset;
use rop_core::pqa::{rank_tail, CandidatePool, PqaQuery, RankResult};
use rop_core::{RopModel, Vocab};

use crate::error::{AppError, AppResult};

/// A pool of `threads` workers; 0 means rayon's default.
pub fn thread_pool(threads: usize) -> AppResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| AppError::Usage(format!("thread pool: {e}")))
}

pub fn rank_queries(
    pool: &rayon::ThreadPool,
    model: &RopModel,
    candidates: &CandidatePool,
    queries: &[PqaQuery],
) -> AppResult<Vec<RankResult>> {
    let per_query = pool.install(|| {
        queries
            .par_iter()
            .enumerate()
            .map(|(i, q)| rank_tail(model, candidates, q, i))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(per_query.into_iter().flatten().collect())
}

pub fn kbc_map(
    pool: &rayon::ThreadPool,
    model: &KbcModel,
    dataset: &KbcDataset,
    split: Split,
    agg: Aggregation,
    vocab: &Vocab,
) -> AppResult<MapReport> {
    let mut per_relation = Vec::with_capacity(dataset.splits.len());
    for (q, (name, s)) in dataset.queries.iter().zip(&dataset.splits).enumerate() {
        let examples = match split {
            Split::Train => &s.train,
            Split::Dev => &s.dev,
            Split::Test => &s.test,
        };
        let scores = pool.install(|| {
            examples
                .par_iter()
                .map(|e| model.score_pair_with(e, q, agg))
                .collect::<Result<Vec<_>, _>>()
        })?;
        per_relation.push((name.clone(), scores));
    }
    Ok(mean_average_precision(per_relation, vocab))
}
