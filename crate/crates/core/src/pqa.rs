//! Path-query answering: tail ranking, H@10 / MQ and the length analysis.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kg::{EntityId, PathInstance, RelationId, TripleStore, Vocab};
use crate::numerics::spearman;
use crate::rop::RopModel;
use crate::train::{train_epoch, EpochStats, TrainConfig};
use crate::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct PqaQuery {
    pub head: EntityId,
    pub relations: Vec<RelationId>,
    /// Sorted, deduplicated denotation of the query.
    pub gold_tails: Vec<EntityId>,
}

impl PqaQuery {
    pub fn new(head: EntityId, relations: Vec<RelationId>, mut gold_tails: Vec<EntityId>) -> Self {
        gold_tails.sort_unstable();
        gold_tails.dedup();
        PqaQuery {
            head,
            relations,
            gold_tails,
        }
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn has_unk(&self) -> bool {
        self.head.is_unk() || self.relations.iter().any(|r| r.is_unk())
    }
}

/// Groups paths by `(head, relations)`; the tails of a group become its
/// gold set. Output is ordered by head, then relation sequence.
pub fn queries_from_paths(paths: &[PathInstance]) -> Vec<PqaQuery> {
    let mut groups: BTreeMap<(EntityId, Vec<RelationId>), Vec<EntityId>> = BTreeMap::new();
    for p in paths {
        groups
            .entry((p.head, p.relations.clone()))
            .or_default()
            .push(p.tail);
    }
    groups
        .into_iter()
        .map(|((h, rels), tails)| PqaQuery::new(h, rels, tails))
        .collect()
}

/// The queries' full denotations in `store`, computed by traversal.
pub fn denotation(store: &TripleStore, head: EntityId, relations: &[RelationId]) -> Vec<EntityId> {
    let mut frontier: BTreeSet<EntityId> = BTreeSet::from([head]);
    for &r in relations {
        frontier = frontier
            .iter()
            .flat_map(|&e| store.successors(e, r).iter().copied())
            .collect();
    }
    frontier.into_iter().collect()
}

/// Type-consistent candidates: every entity seen as a tail of each final
/// relation at training time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CandidatePool {
    by_relation: BTreeMap<RelationId, BTreeSet<EntityId>>,
    n_entities: usize,
    full_vocab: bool,
}

impl CandidatePool {
    pub fn new(n_entities: usize) -> Self {
        CandidatePool {
            n_entities,
            ..Default::default()
        }
    }

    /// Ranks against every entity regardless of relation.
    pub fn full_vocab(n_entities: usize) -> Self {
        CandidatePool {
            full_vocab: true,
            ..Self::new(n_entities)
        }
    }

    pub fn from_paths(paths: &[PathInstance], n_entities: usize) -> Self {
        let mut pool = Self::new(n_entities);
        for p in paths {
            if let Some(&r) = p.relations.last() {
                pool.observe(r, p.tail);
            }
        }
        pool
    }

    pub fn observe(&mut self, relation: RelationId, tail: EntityId) {
        if !tail.is_unk() {
            self.by_relation.entry(relation).or_default().insert(tail);
        }
    }

    /// Candidates for a query ending in `relation`, always including the
    /// gold tails. Falls back to the whole vocabulary when nothing was
    /// observed for the relation.
    pub fn candidates(&self, relation: Option<RelationId>, gold: &[EntityId]) -> Vec<EntityId> {
        let observed = relation.and_then(|r| self.by_relation.get(&r));
        let mut out: BTreeSet<EntityId> = match observed {
            Some(set) if !self.full_vocab => set.clone(),
            _ => (0..self.n_entities as u32).map(EntityId).collect(),
        };
        out.extend(gold.iter().copied().filter(|g| !g.is_unk()));
        out.into_iter().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankResult {
    /// Index of the query in the evaluated list.
    pub query: usize,
    pub gold: EntityId,
    pub rank: usize,
    pub candidates: usize,
    pub quantile: f64,
    pub length: usize,
    pub unk: bool,
}

/// Pessimistic rank of a gold score among incorrect ones, and the fraction
/// of incorrect candidates scored strictly below it. With no incorrect
/// candidates the quantile is 1.
pub fn rank_from_scores(gold: f64, incorrect: &[f64]) -> (usize, f64) {
    let above = incorrect.iter().filter(|&&s| !(s < gold)).count();
    let quantile = if incorrect.is_empty() {
        1.0
    } else {
        (incorrect.len() - above) as f64 / incorrect.len() as f64
    };
    (above + 1, quantile)
}

/// Ranks every gold tail of `query` (filtered: other golds are removed
/// from the pool) by similarity to the final predicted embedding.
pub fn rank_tail(model: &RopModel, pool: &CandidatePool, query: &PqaQuery, index: usize) -> Result<Vec<RankResult>> {
    let scored = score_candidates(model, pool, query)?;
    let gold: BTreeSet<EntityId> = query.gold_tails.iter().copied().collect();
    let incorrect: Vec<f64> = scored
        .iter()
        .filter(|(e, _)| !gold.contains(e))
        .map(|&(_, s)| s)
        .collect();
    let unk = query.has_unk();
    Ok(scored
        .iter()
        .filter(|(e, _)| gold.contains(e))
        .map(|&(g, s)| {
            let (rank, quantile) = rank_from_scores(s, &incorrect);
            RankResult {
                query: index,
                gold: g,
                rank,
                candidates: incorrect.len() + 1,
                quantile,
                length: query.len(),
                unk,
            }
        })
        .collect())
}

fn score_candidates(model: &RopModel, pool: &CandidatePool, query: &PqaQuery) -> Result<Vec<(EntityId, f64)>> {
    if query.is_empty() {
        return Err(Error::EmptySequence);
    }
    let trace = model.forward(query.head, &query.relations)?;
    let pred = trace.last();
    let sim = model.config.similarity;
    pool.candidates(query.relations.last().copied(), &query.gold_tails)
        .into_iter()
        .map(|e| Ok((e, sim.eval(model.entities.value.row(e.index()), pred)?)))
        .collect()
}

/// The `k` best candidates, by descending score and then entity name.
pub fn top_k(model: &RopModel, pool: &CandidatePool, query: &PqaQuery, k: usize, vocab: &Vocab) -> Result<Vec<(EntityId, f64)>> {
    let mut scored = score_candidates(model, pool, query)?;
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| vocab.entity_name(a.0).cmp(vocab.entity_name(b.0)))
    });
    scored.truncate(k);
    Ok(scored)
}

pub fn rank_all(model: &RopModel, pool: &CandidatePool, queries: &[PqaQuery]) -> Result<Vec<RankResult>> {
    let mut out = Vec::new();
    for (i, q) in queries.iter().enumerate() {
        out.extend(rank_tail(model, pool, q, i)?);
    }
    Ok(out)
}

/// Percentage of results ranked in the top 10.
pub fn hits_at_10(results: &[RankResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Undefined("hits@10 of an empty result list"));
    }
    let hits = results.iter().filter(|r| r.rank <= 10).count();
    Ok(100.0 * hits as f64 / results.len() as f64)
}

/// Mean quantile, ×100.
pub fn mean_quantile(results: &[RankResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Undefined("mean quantile of an empty result list"));
    }
    Ok(100.0 * results.iter().map(|r| r.quantile).sum::<f64>() / results.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LengthBucket {
    pub length: usize,
    pub h_at_10: f64,
    pub mq: f64,
    pub inverse_pct: f64,
    /// Results (gold tails) in the bucket.
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LengthReport {
    pub buckets: Vec<LengthBucket>,
    /// Spearman correlation between inverse percentage and H@10 across
    /// buckets; `None` when fewer than two buckets or a constant column.
    pub spearman_inverse_vs_h10: Option<f64>,
}

/// Buckets results by query length. The inverse percentage counts relation
/// tokens of the bucket's queries (each query once).
pub fn length_report(results: &[RankResult], queries: &[PqaQuery], vocab: &Vocab) -> Result<LengthReport> {
    let mut by_len: BTreeMap<usize, Vec<RankResult>> = BTreeMap::new();
    for r in results {
        by_len.entry(r.length).or_default().push(*r);
    }
    let mut buckets = Vec::new();
    for (length, rs) in by_len {
        let qs: BTreeSet<usize> = rs.iter().map(|r| r.query).collect();
        let (mut inv, mut total) = (0usize, 0usize);
        for &qi in &qs {
            let q = queries
                .get(qi)
                .ok_or_else(|| Error::Config(alloc::format!("result refers to missing query {qi}")))?;
            total += q.relations.len();
            inv += q.relations.iter().filter(|&&r| !r.is_unk() && vocab.is_inverse(r)).count();
        }
        buckets.push(LengthBucket {
            length,
            h_at_10: hits_at_10(&rs)?,
            mq: mean_quantile(&rs)?,
            inverse_pct: if total == 0 { 0.0 } else { 100.0 * inv as f64 / total as f64 },
            n: rs.len(),
        });
    }
    let inv: Vec<f64> = buckets.iter().map(|b| b.inverse_pct).collect();
    let h10: Vec<f64> = buckets.iter().map(|b| b.h_at_10).collect();
    Ok(LengthReport {
        spearman_inverse_vs_h10: spearman(&inv, &h10).ok(),
        buckets,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PqaEpoch {
    pub epoch: usize,
    pub stats: EpochStats,
    pub dev_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PqaTrainSummary {
    pub history: Vec<PqaEpoch>,
    pub best_epoch: Option<usize>,
    pub best_score: Option<f64>,
}

/// Trains for up to `epochs` epochs. `dev` scores the model after each
/// epoch (H@10 by convention; `None` disables selection); the model ends
/// at its best-scoring parameters. `on_epoch` returning `false` stops early.
pub fn train_pqa<D, C>(
    model: &mut RopModel,
    paths: &[PathInstance],
    cfg: &TrainConfig,
    epochs: usize,
    rng: &mut Rng,
    mut dev: D,
    mut on_epoch: C,
) -> Result<PqaTrainSummary>
where
    D: FnMut(&RopModel) -> Result<Option<f64>>,
    C: FnMut(&PqaEpoch, &RopModel) -> bool,
{
    let mut summary = PqaTrainSummary {
        history: Vec::new(),
        best_epoch: None,
        best_score: None,
    };
    let mut best: Option<RopModel> = None;
    for epoch in 1..=epochs {
        let stats = train_epoch(model, paths, cfg, rng)?;
        let dev_score = dev(model)?;
        if let Some(s) = dev_score {
            if summary.best_score.is_none_or(|b| s > b) {
                summary.best_score = Some(s);
                summary.best_epoch = Some(epoch);
                best = Some(model.clone());
            }
        }
        let record = PqaEpoch {
            epoch,
            stats,
            dev_score,
        };
        let go_on = on_epoch(&record, model);
        summary.history.push(record);
        if !go_on {
            break;
        }
    }
    if let Some(b) = best {
        *model = b;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests;
