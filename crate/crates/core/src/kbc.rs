//! Multi-hop knowledge-base completion: a ROP branch trained with the
//! sequence loss, jointly with a relation-sequence GRU whose final state is
//! matched against a per-query-relation embedding.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KbcDataset, KbcExample, RelationId, Vocab};
use crate::numerics::{
    add_assign, adagrad_update, adagrad_update_rows, hinge_active, margin_loss, GruCache, GruParams,
    Matrix, Param, Parameterized, Similarity, ADAGRAD_EPS,
};
use crate::rop::{path_targets, Composition, RopConfig, RopModel, Target, CELL_INIT_SCALE};
use crate::train::{apply_rop_update, check_finite, note_rows, TouchedRows};
use crate::Rng;

/// How per-path scores of a pair are pooled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
    LogSumExp,
}

impl Aggregation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max" => Some(Aggregation::Max),
            "mean" => Some(Aggregation::Mean),
            "logsumexp" => Some(Aggregation::LogSumExp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
            Aggregation::LogSumExp => "logsumexp",
        }
    }

    /// −∞ for an empty list.
    pub fn pool(self, scores: &[f64]) -> f64 {
        if scores.is_empty() {
            return f64::NEG_INFINITY;
        }
        match self {
            Aggregation::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
            Aggregation::LogSumExp => {
                let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + libm::log(scores.iter().map(|s| libm::exp(s - m)).sum::<f64>())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KbcConfig {
    /// ROP branch; its margin is α and `negatives` the per-position sample
    /// size of the sequence loss.
    pub rop: RopConfig,
    /// Margin β of the prediction loss.
    pub beta: f64,
    /// Weight λ of the prediction loss.
    pub pred_weight: f64,
    /// Weight of the sequence loss; 0 freezes the ROP cells.
    pub seq_weight: f64,
    /// Similarity between path encodings and query embeddings.
    pub similarity: Similarity,
    pub aggregation: Aggregation,
}

impl KbcConfig {
    /// Defaults of the KBC setup: α = β = 0.5, 4 negatives, cosine, max.
    pub fn new(rop: RopConfig) -> Self {
        KbcConfig {
            rop: RopConfig {
                margin: 0.5,
                negatives: 4,
                ..rop
            },
            beta: 0.5,
            pred_weight: 1.0,
            seq_weight: 1.0,
            similarity: Similarity::Cosine,
            aggregation: Aggregation::Max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rop.validate()?;
        if self.seq_weight != 0.0 && self.rop.comp == Composition::Add {
            return Err(Error::Config(
                "the KBC sequence loss is only defined for GRU/eGRU compositions".into(),
            ));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.pred_weight < 0.0 || self.seq_weight < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KbcModel {
    pub config: KbcConfig,
    pub rop: RopModel,
    /// Relation-sequence encoder over the shared relation embeddings.
    pub gru_r: GruParams,
    /// One row per query relation, `n_queries × d_h`.
    pub queries: Param,
}

/// Final state plus caches of the relation-sequence encoder.
#[derive(Clone, Debug)]
pub struct SeqEncoding {
    pub relations: Vec<RelationId>,
    pub steps: Vec<GruCache>,
}

impl SeqEncoding {
    pub fn last(&self) -> &[f64] {
        &self.steps.last().expect("non-empty encoding").h
    }
}

/// Final hidden state of `gru_r` run from zero over the relation embeddings.
pub fn encode_relation_seq(gru_r: &GruParams, relation_table: &Param, relations: &[RelationId]) -> Result<Vec<f64>> {
    Ok(encode_with_cache(gru_r, relation_table, relations)?.last().to_vec())
}

fn encode_with_cache(gru_r: &GruParams, table: &Param, relations: &[RelationId]) -> Result<SeqEncoding> {
    if relations.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut h = vec![0.0; gru_r.hidden_dim()];
    let mut steps = Vec::with_capacity(relations.len());
    for &r in relations {
        let x = if r.is_unk() {
            vec![0.0; table.value.cols()]
        } else if r.index() < table.value.rows() {
            table.value.row(r.index()).to_vec()
        } else {
            return Err(Error::Dimension {
                what: "relation id",
                expected: table.value.rows(),
                got: r.index(),
            });
        };
        let c = gru_r.forward(&h, &x)?;
        h = c.h.clone();
        steps.push(c);
    }
    Ok(SeqEncoding {
        relations: relations.to_vec(),
        steps,
    })
}

/// `Σ_{j,i} max(0, β + s(h_j⁻, r) − s(h_i, r))`.
pub fn prediction_loss(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    query: &[f64],
    beta: f64,
    sim: Similarity,
) -> Result<f64> {
    let pos = positives
        .iter()
        .map(|h| sim.eval(h, query))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for h in negatives {
        let s_neg = sim.eval(h, query)?;
        total += pos.iter().map(|&s| margin_loss(s, s_neg, beta)).sum::<f64>();
    }
    Ok(total)
}

/// A pair's aggregated score for one query relation.
#[derive(Clone, Debug, PartialEq)]
pub struct PairScore {
    pub head: EntityId,
    pub tail: EntityId,
    pub label: bool,
    pub score: f64,
}

/// One labelled pair of a minibatch, tagged with its query relation.
#[derive(Clone, Copy, Debug)]
pub struct BatchItem<'a> {
    pub query: usize,
    pub example: &'a KbcExample,
}

/// Sampled sequence-loss targets for each path of each batch item.
pub type BatchTargets = Vec<Vec<Vec<Target>>>;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KbcLoss {
    pub seq: f64,
    pub pred: f64,
}

impl KbcLoss {
    pub fn total(&self, cfg: &KbcConfig) -> f64 {
        cfg.seq_weight * self.seq + cfg.pred_weight * self.pred
    }
}

impl KbcModel {
    pub fn new(config: KbcConfig, n_entities: usize, n_relations: usize, n_queries: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let rop = RopModel::new(config.rop.clone(), n_entities, n_relations, rng)?;
        let d_q = config.rop.d_h;
        let gru_r = GruParams::uniform(config.rop.d_r, d_q, CELL_INIT_SCALE, rng);
        let mut q = Matrix::uniform(n_queries, d_q, 6.0 / libm::sqrt(d_q as f64), rng);
        for i in 0..n_queries {
            let row = q.row_mut(i);
            let n = libm::sqrt(row.iter().map(|x| x * x).sum::<f64>());
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
        Ok(KbcModel {
            config,
            rop,
            gru_r,
            queries: Param::new(q),
        })
    }

    pub fn n_queries(&self) -> usize {
        self.queries.value.rows()
    }

    pub fn encode(&self, relations: &[RelationId]) -> Result<Vec<f64>> {
        encode_relation_seq(&self.gru_r, &self.rop.relations, relations)
    }

    fn query_row(&self, query: usize) -> Result<&[f64]> {
        if query >= self.n_queries() {
            return Err(Error::Dimension {
                what: "query relation index",
                expected: self.n_queries(),
                got: query,
            });
        }
        Ok(self.queries.value.row(query))
    }

    /// Per-path similarities to the query relation.
    pub fn path_scores(&self, example: &KbcExample, query: usize) -> Result<Vec<f64>> {
        let r = self.query_row(query)?;
        example
            .paths
            .iter()
            .map(|p| self.config.similarity.eval(&self.encode(&p.relations)?, r))
            .collect()
    }

    /// Pools the path similarities with the configured aggregation (−∞
    /// without paths). The ROP branch does not take part in scoring.
    pub fn score_pair(&self, example: &KbcExample, query: usize) -> Result<PairScore> {
        self.score_pair_with(example, query, self.config.aggregation)
    }

    pub fn score_pair_with(&self, example: &KbcExample, query: usize, agg: Aggregation) -> Result<PairScore> {
        Ok(PairScore {
            head: example.head,
            tail: example.tail,
            label: example.label,
            score: agg.pool(&self.path_scores(example, query)?),
        })
    }

    /// Negatives for the sequence loss of every path in the batch.
    pub fn sample_targets(&self, batch: &[BatchItem<'_>], rng: &mut Rng) -> BatchTargets {
        let n = self.rop.n_entities();
        let k = self.config.rop.negatives;
        let active = self.config.seq_weight != 0.0;
        batch
            .iter()
            .map(|item| {
                item.example
                    .paths
                    .iter()
                    .map(|p| if active { path_targets(p, n, k, rng) } else { Vec::new() })
                    .collect()
            })
            .collect()
    }

    /// Both loss parts of a batch for fixed targets.
    pub fn batch_loss(&self, batch: &[BatchItem<'_>], targets: &BatchTargets) -> Result<KbcLoss> {
        let mut loss = KbcLoss::default();
        for (item, tgts) in batch.iter().zip(targets) {
            for (p, t) in item.example.paths.iter().zip(tgts) {
                if !t.is_empty() {
                    loss.seq += self.rop.path_loss(p.head, &p.relations, t)?;
                }
            }
        }
        for (query, (pos, neg)) in self.group_encodings(batch)? {
            loss.pred += prediction_loss(&pos, &neg, self.query_row(query)?, self.config.beta, self.config.similarity)?;
        }
        Ok(loss)
    }

    fn group_encodings(&self, batch: &[BatchItem<'_>]) -> Result<BTreeMap<usize, (Vec<Vec<f64>>, Vec<Vec<f64>>)>> {
        let mut groups: BTreeMap<usize, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = BTreeMap::new();
        for item in batch {
            let g = groups.entry(item.query).or_default();
            for p in &item.example.paths {
                let h = self.encode(&p.relations)?;
                if item.example.label {
                    g.0.push(h);
                } else {
                    g.1.push(h);
                }
            }
        }
        Ok(groups)
    }

    /// Adds the gradient of `seq_weight·l_seq + pred_weight·l_pred` and
    /// returns the unweighted parts. Embedding rows used are recorded in
    /// `rows`.
    pub fn accumulate_batch_grad(
        &mut self,
        batch: &[BatchItem<'_>],
        targets: &BatchTargets,
        rows: &mut TouchedRows,
    ) -> Result<KbcLoss> {
        let mut loss = KbcLoss::default();
        let seq_w = self.config.seq_weight;
        for (item, tgts) in batch.iter().zip(targets) {
            for (p, t) in item.example.paths.iter().zip(tgts) {
                if t.is_empty() {
                    continue;
                }
                loss.seq += self.rop.accumulate_path_grad(p.head, &p.relations, t, seq_w)?;
                note_rows(rows, p, t);
            }
        }

        let sim = self.config.similarity;
        let beta = self.config.beta;
        let lambda = self.config.pred_weight;
        // per query: (path encoding, label)
        let mut groups: BTreeMap<usize, Vec<(SeqEncoding, bool)>> = BTreeMap::new();
        for item in batch {
            for p in &item.example.paths {
                let enc = encode_with_cache(&self.gru_r, &self.rop.relations, &p.relations)?;
                rows.relations
                    .extend(p.relations.iter().filter(|r| !r.is_unk()).map(|r| r.index()));
                groups.entry(item.query).or_default().push((enc, item.example.label));
            }
        }
        for (query, encs) in groups {
            let r = self.query_row(query)?.to_vec();
            let sims = encs
                .iter()
                .map(|(e, _)| sim.eval(e.last(), &r))
                .collect::<Result<Vec<_>>>()?;
            // ∂l_pred/∂s for each path
            let mut d_sim = vec![0.0; encs.len()];
            for (j, (_, lj)) in encs.iter().enumerate() {
                if *lj {
                    continue;
                }
                for (i, (_, li)) in encs.iter().enumerate() {
                    if !*li {
                        continue;
                    }
                    loss.pred += margin_loss(sims[i], sims[j], beta);
                    if hinge_active(sims[i], sims[j], beta) {
                        d_sim[j] += lambda;
                        d_sim[i] -= lambda;
                    }
                }
            }
            let mut d_query = vec![0.0; r.len()];
            for ((enc, _), &ds) in encs.iter().zip(&d_sim) {
                if ds == 0.0 {
                    continue;
                }
                let mut d_h = vec![0.0; r.len()];
                sim.backward(enc.last(), &r, ds, &mut d_h, &mut d_query);
                self.backward_encoding(enc, d_h);
            }
            add_assign(self.queries.grad.row_mut(query), &d_query);
        }
        Ok(loss)
    }

    fn backward_encoding(&mut self, enc: &SeqEncoding, mut d_h: Vec<f64>) {
        let d_r = self.rop.relations.value.cols();
        for (step, r) in enc.steps.iter().zip(&enc.relations).rev() {
            let mut d_prev = vec![0.0; d_h.len()];
            let mut d_x = vec![0.0; d_r];
            self.gru_r.backward(step, &d_h, &mut d_prev, &mut d_x);
            if !r.is_unk() {
                add_assign(self.rop.relations.grad.row_mut(r.index()), &d_x);
            }
            d_h = d_prev;
        }
    }

    fn apply_update(&mut self, rows: &TouchedRows, queries: &[usize], lr: f64, eps: f64) {
        apply_rop_update(&mut self.rop, rows, lr, eps);
        for (_, p) in self.gru_r.params_mut() {
            adagrad_update(p, lr, eps);
        }
        adagrad_update_rows(&mut self.queries, queries.iter().copied(), lr, eps);
    }
}

impl Parameterized for KbcModel {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        self.rop.visit_params(f);
        for (n, p) in self.gru_r.params() {
            f(&format!("gru_r.{n}"), p);
        }
        f("queries", &self.queries);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.rop.visit_params_mut(f);
        for (n, p) in self.gru_r.params_mut() {
            f(&format!("gru_r.{n}"), p);
        }
        f("queries", &mut self.queries);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KbcTrainConfig {
    pub lr: f64,
    pub eps: f64,
    /// Entity pairs per minibatch.
    pub batch_size: usize,
}

impl Default for KbcTrainConfig {
    fn default() -> Self {
        KbcTrainConfig {
            lr: 0.1,
            eps: ADAGRAD_EPS,
            batch_size: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KbcEpochStats {
    pub seq: f64,
    pub pred: f64,
    pub total: f64,
    pub batches: usize,
}

/// One epoch over the training pairs of every query relation, in a seeded
/// random order.
pub fn train_kbc_epoch(
    model: &mut KbcModel,
    dataset: &KbcDataset,
    cfg: &KbcTrainConfig,
    rng: &mut Rng,
) -> Result<KbcEpochStats> {
    if dataset.splits.len() > model.n_queries() {
        return Err(Error::Config(format!(
            "dataset has {} query relations, model {}",
            dataset.splits.len(),
            model.n_queries()
        )));
    }
    let mut items: Vec<BatchItem<'_>> = dataset
        .splits
        .iter()
        .enumerate()
        .flat_map(|(q, s)| s.train.iter().map(move |example| BatchItem { query: q, example }))
        .collect();
    items.shuffle(rng);
    let mut stats = KbcEpochStats::default();
    let mut rows = TouchedRows::default();
    for (b, batch) in items.chunks(cfg.batch_size.max(1)).enumerate() {
        rows.clear();
        let targets = model.sample_targets(batch, rng);
        let loss = model.accumulate_batch_grad(batch, &targets, &mut rows)?;
        let total = loss.total(&model.config);
        check_finite(total, || format!("kbc batch {b}"))?;
        let mut queries: Vec<usize> = batch.iter().map(|i| i.query).collect();
        queries.sort_unstable();
        queries.dedup();
        model.apply_update(&rows, &queries, cfg.lr, cfg.eps);
        stats.seq += loss.seq;
        stats.pred += loss.pred;
        stats.total += total;
        stats.batches += 1;
    }
    Ok(stats)
}

/// Trains for `epochs` epochs; `on_epoch` may stop early by returning false.
pub fn train_kbc(
    model: &mut KbcModel,
    dataset: &KbcDataset,
    cfg: &KbcTrainConfig,
    epochs: usize,
    rng: &mut Rng,
    mut on_epoch: impl FnMut(usize, &KbcModel, &KbcEpochStats) -> bool,
) -> Result<()> {
    for epoch in 1..=epochs {
        let stats = train_kbc_epoch(model, dataset, cfg, rng)?;
        if !on_epoch(epoch, model, &stats) {
            break;
        }
    }
    Ok(())
}

/// Sorts by descending score, ties by `(head, tail)` names ascending.
pub fn rank_pairs(scores: &mut [PairScore], vocab: &Vocab) {
    scores.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then_with(|| {
            (vocab.entity_name(a.head), vocab.entity_name(a.tail))
                .cmp(&(vocab.entity_name(b.head), vocab.entity_name(b.tail)))
        })
    });
}

/// Mean over positive positions `k` of precision@k; `None` without
/// positives.
pub fn average_precision(ranked_labels: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &pos) in ranked_labels.iter().enumerate() {
        if pos {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationAp {
    pub relation: String,
    /// `None` when the relation has no positive pair (excluded from MAP).
    pub ap: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapReport {
    pub per_relation: Vec<RelationAp>,
    pub map: f64,
}

impl MapReport {
    pub fn excluded(&self) -> impl Iterator<Item = &RelationAp> {
        self.per_relation.iter().filter(|r| r.ap.is_none())
    }
}

/// Unweighted mean of per-relation APs over already-scored pairs.
pub fn mean_average_precision(per_relation: Vec<(String, Vec<PairScore>)>, vocab: &Vocab) -> MapReport {
    let mut out = Vec::with_capacity(per_relation.len());
    for (relation, mut scores) in per_relation {
        rank_pairs(&mut scores, vocab);
        let labels: Vec<bool> = scores.iter().map(|s| s.label).collect();
        let n_pos = labels.iter().filter(|&&l| l).count();
        out.push(RelationAp {
            relation,
            ap: average_precision(&labels),
            n_pos,
            n_neg: labels.len() - n_pos,
        });
    }
    let aps: Vec<f64> = out.iter().filter_map(|r| r.ap).collect();
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    MapReport {
        per_relation: out,
        map,
    }
}

/// Which split of a [`KbcDataset`] to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// Scores every pair of `split` and computes MAP across query relations.
pub fn evaluate_map(
    model: &KbcModel,
    dataset: &KbcDataset,
    split: Split,
    agg: Aggregation,
    vocab: &Vocab,
) -> Result<MapReport> {
    let mut per_relation = Vec::with_capacity(dataset.splits.len());
    for (q, (name, s)) in dataset.queries.iter().zip(&dataset.splits).enumerate() {
        let examples = match split {
            Split::Train => &s.train,
            Split::Dev => &s.dev,
            Split::Test => &s.test,
        };
        let scores = examples
            .iter()
            .map(|e| model.score_pair_with(e, q, agg))
            .collect::<Result<Vec<_>>>()?;
        per_relation.push((name.clone(), scores));
    }
    Ok(mean_average_precision(per_relation, vocab))
}

#[cfg(test)]
mod tests;
