//! Minibatch training of a [`RopModel`] on path corpora.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::kg::PathInstance;
use crate::numerics::{adagrad_update, adagrad_update_rows, ADAGRAD_EPS};
use crate::rop::{path_targets, CompParams, RopModel};
use crate::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub eps: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            eps: ADAGRAD_EPS,
            batch_size: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// Sum of the sequence loss over all paths, evaluated before each
    /// batch's update.
    pub loss: f64,
    pub paths: usize,
    pub batches: usize,
}

/// Embedding rows touched by a batch.
#[derive(Clone, Debug, Default)]
pub struct TouchedRows {
    pub entities: BTreeSet<usize>,
    pub relations: BTreeSet<usize>,
}

impl TouchedRows {
    pub fn clear(&mut self) {
        self.entities.clear();
        self.relations.clear();
    }
}

/// AdaGrad step on the recurrent cells and on the touched embedding rows.
pub fn apply_rop_update(model: &mut RopModel, rows: &TouchedRows, lr: f64, eps: f64) {
    for (_, p) in model.encoder.params_mut() {
        adagrad_update(p, lr, eps);
    }
    match &mut model.comp {
        CompParams::Gru(g) => g.params_mut().into_iter().for_each(|(_, p)| adagrad_update(p, lr, eps)),
        CompParams::EGru(g) => g.params_mut().into_iter().for_each(|(_, p)| adagrad_update(p, lr, eps)),
        CompParams::None | CompParams::Add => {}
    }
    adagrad_update_rows(&mut model.entities, rows.entities.iter().copied(), lr, eps);
    adagrad_update_rows(&mut model.relations, rows.relations.iter().copied(), lr, eps);
}

pub(crate) fn check_finite(loss: f64, context: impl FnOnce() -> alloc::string::String) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            loss,
            context: context(),
        })
    }
}

/// One pass over `paths` in a seeded random order. Negatives are resampled
/// for every visit; each batch's summed loss is backpropagated through the
/// full recurrence and applied with AdaGrad.
pub fn train_epoch(
    model: &mut RopModel,
    paths: &[PathInstance],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<EpochStats> {
    let mut order: Vec<usize> = (0..paths.len()).collect();
    order.shuffle(rng);
    let n_entities = model.n_entities();
    let k = model.config.negatives;
    let mut stats = EpochStats {
        loss: 0.0,
        paths: 0,
        batches: 0,
    };
    let mut rows = TouchedRows::default();
    for (b, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
        rows.clear();
        let mut batch_loss = 0.0;
        for &i in batch {
            let path = &paths[i];
            let targets = path_targets(path, n_entities, k, rng);
            if targets.is_empty() {
                continue;
            }
            batch_loss += model.accumulate_path_grad(path.head, &path.relations, &targets, 1.0)?;
            note_rows(&mut rows, path, &targets);
            stats.paths += 1;
        }
        check_finite(batch_loss, || format!("batch {b}"))?;
        apply_rop_update(model, &rows, cfg.lr, cfg.eps);
        stats.loss += batch_loss;
        stats.batches += 1;
    }
    Ok(stats)
}

pub(crate) fn note_rows(rows: &mut TouchedRows, path: &PathInstance, targets: &[crate::rop::Target]) {
    if !path.head.is_unk() {
        rows.entities.insert(path.head.index());
    }
    for t in targets {
        rows.entities.insert(t.gold.index());
        rows.entities.extend(t.negatives.iter().map(|n| n.index()));
    }
    rows.relations
        .extend(path.relations.iter().filter(|r| !r.is_unk()).map(|r| r.index()));
}
