//! The three recurrent one-hop predictor architectures and their sequence
//! margin loss.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kg::{EntityId, PathInstance, RelationId};
use crate::numerics::{
    add_assign, hinge_active, margin_loss, EGruCache, EGruParams, GruCache, GruParams, Matrix,
    Param, Parameterized, Similarity,
};
use crate::Rng;

/// Scale of the uniform initialisation of recurrent-cell matrices.
pub const CELL_INIT_SCALE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    /// Head entity seeds the GRU state; relations are the inputs.
    Arc1,
    /// Relation encoder from a zero state, composed with the head entity.
    Arc2,
    /// Relation encoder composed with the head and the previous prediction.
    Arc3,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Arc1 => "arc1",
            Arch::Arc2 => "arc2",
            Arch::Arc3 => "arc3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arc1" => Some(Arch::Arc1),
            "arc2" => Some(Arch::Arc2),
            "arc3" => Some(Arch::Arc3),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Composition {
    None,
    Add,
    Gru,
    EGru,
}

impl Composition {
    pub fn name(self) -> &'static str {
        match self {
            Composition::None => "none",
            Composition::Add => "add",
            Composition::Gru => "gru",
            Composition::EGru => "egru",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Some(Composition::None),
            "add" => Some(Composition::Add),
            "gru" => Some(Composition::Gru),
            "egru" => Some(Composition::EGru),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RopConfig {
    pub arch: Arch,
    pub comp: Composition,
    pub d_e: usize,
    pub d_r: usize,
    pub d_h: usize,
    pub margin: f64,
    pub negatives: usize,
    pub similarity: Similarity,
}

impl RopConfig {
    /// Square configuration with `d_e = d_r = d_h = dim`.
    pub fn new(arch: Arch, comp: Composition, dim: usize) -> Self {
        RopConfig {
            arch,
            comp,
            d_e: dim,
            d_r: dim,
            d_h: dim,
            margin: 0.3,
            negatives: 10,
            similarity: Similarity::Cosine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let legal = match self.arch {
            Arch::Arc1 => matches!(self.comp, Composition::None),
            Arch::Arc2 => matches!(self.comp, Composition::Add | Composition::Gru),
            Arch::Arc3 => matches!(self.comp, Composition::Add | Composition::EGru),
        };
        if !legal {
            return bad(format!(
                "composition {} is not available for {}",
                self.comp.name(),
                self.arch.name()
            ));
        }
        if self.d_e == 0 || self.d_r == 0 || self.d_h == 0 {
            return bad("dimensions must be at least 1".into());
        }
        let needs_square = matches!(self.arch, Arch::Arc1 | Arch::Arc3) || self.comp == Composition::Add;
        if needs_square && self.d_e != self.d_h {
            return bad(format!(
                "{}/{} requires d_e = d_h (got {} and {})",
                self.arch.name(),
                self.comp.name(),
                self.d_e,
                self.d_h
            ));
        }
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        Ok(())
    }
}

/// Parameters of the composition step.
#[derive(Clone, Debug, PartialEq)]
pub enum CompParams {
    None,
    Add,
    Gru(GruParams),
    EGru(EGruParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RopModel {
    pub config: RopConfig,
    pub entities: Param,
    pub relations: Param,
    /// The relation-sequence GRU; for ARC1 it is the only cell and its state
    /// is the predicted entity.
    pub encoder: GruParams,
    pub comp: CompParams,
}

#[derive(Clone, Debug)]
enum CompCache {
    None,
    Add,
    Gru(GruCache),
    EGru(EGruCache),
}

#[derive(Clone, Debug)]
struct StepCache {
    encoder: GruCache,
    comp: CompCache,
}

/// Per-step activations of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub head: EntityId,
    pub relations: Vec<RelationId>,
    pub head_embedding: Vec<f64>,
    /// `ê_1 … ê_t`.
    pub predicted: Vec<Vec<f64>>,
    steps: Vec<StepCache>,
}

impl ForwardTrace {
    /// Relation-encoder states `h_1 … h_t` (the predictions themselves for
    /// ARC1).
    pub fn hidden(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.encoder.h.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.predicted.last().expect("non-empty trace")
    }
}

/// Gold entity and sampled negatives at one (1-based) path position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    pub position: usize,
    pub gold: EntityId,
    pub negatives: Vec<EntityId>,
}

/// One position's contribution to the sequence loss, on raw vectors.
#[derive(Clone, Debug)]
pub struct SeqTerm<'a> {
    pub position: usize,
    pub gold: &'a [f64],
    pub negatives: Vec<&'a [f64]>,
}

/// `Σ_i Σ_neg max(0, α + s(e⁻, ê_i) − s(e_i, ê_i))`.
pub fn sequence_loss(
    predicted: &[Vec<f64>],
    terms: &[SeqTerm<'_>],
    margin: f64,
    sim: Similarity,
) -> Result<f64> {
    let mut total = 0.0;
    for term in terms {
        let pred = predicted
            .get(term.position.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidPath(format!("position {} out of range", term.position)))?;
        let pos = sim.eval(term.gold, pred)?;
        for neg in &term.negatives {
            total += margin_loss(pos, sim.eval(neg, pred)?, margin);
        }
    }
    Ok(total)
}

/// Uniform draws from the entity vocabulary excluding `gold`.
pub fn sample_negatives(gold: EntityId, n_entities: usize, k: usize, rng: &mut Rng) -> Vec<EntityId> {
    if n_entities < 2 {
        return Vec::new();
    }
    (0..k)
        .map(|_| {
            let mut e = rng.gen_range(0..n_entities as u32 - 1);
            if !gold.is_unk() && e >= gold.0 {
                e += 1;
            }
            EntityId(e)
        })
        .collect()
}

/// Targets for every position with a known gold entity: all hops on an
/// enhanced path, only the tail on a base path.
pub fn path_targets(path: &PathInstance, n_entities: usize, k: usize, rng: &mut Rng) -> Vec<Target> {
    (1..=path.len())
        .filter_map(|i| path.entity_at(i).map(|g| (i, g)))
        .map(|(position, gold)| Target {
            position,
            gold,
            negatives: sample_negatives(gold, n_entities, k, rng),
        })
        .collect()
}

fn l2_normalize(v: &mut [f64]) {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl RopModel {
    /// Random initialisation: cells uniform in ±0.08, embeddings uniform in
    /// ±6/√d and then L2-normalised.
    pub fn new(config: RopConfig, n_entities: usize, n_relations: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut entities = Matrix::uniform(n_entities, config.d_e, 6.0 / libm::sqrt(config.d_e as f64), rng);
        let mut relations =
            Matrix::uniform(n_relations, config.d_r, 6.0 / libm::sqrt(config.d_r as f64), rng);
        for i in 0..n_entities {
            l2_normalize(entities.row_mut(i));
        }
        for i in 0..n_relations {
            l2_normalize(relations.row_mut(i));
        }
        let s = CELL_INIT_SCALE;
        let encoder = GruParams::uniform(config.d_r, Self::state_dim(&config), s, rng);
        let comp = match config.comp {
            Composition::None => CompParams::None,
            Composition::Add => CompParams::Add,
            Composition::Gru => CompParams::Gru(GruParams::uniform(config.d_h, config.d_e, s, rng)),
            Composition::EGru => CompParams::EGru(EGruParams::uniform(config.d_h, config.d_e, s, rng)),
        };
        Ok(RopModel {
            config,
            entities: Param::new(entities),
            relations: Param::new(relations),
            encoder,
            comp,
        })
    }

    /// All parameters zero, including embeddings.
    pub fn zeros(config: RopConfig, n_entities: usize, n_relations: usize) -> Result<Self> {
        config.validate()?;
        let comp = match config.comp {
            Composition::None => CompParams::None,
            Composition::Add => CompParams::Add,
            Composition::Gru => CompParams::Gru(GruParams::zeros(config.d_h, config.d_e)),
            Composition::EGru => CompParams::EGru(EGruParams::zeros(config.d_h, config.d_e)),
        };
        Ok(RopModel {
            entities: Param::zeros(n_entities, config.d_e),
            relations: Param::zeros(n_relations, config.d_r),
            encoder: GruParams::zeros(config.d_r, Self::state_dim(&config)),
            comp,
            config,
        })
    }

    fn state_dim(config: &RopConfig) -> usize {
        match config.arch {
            Arch::Arc1 => config.d_e,
            _ => config.d_h,
        }
    }

    pub fn n_entities(&self) -> usize {
        self.entities.value.rows()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.value.rows()
    }

    /// Embedding row, or zeros for [`EntityId::UNK`].
    pub fn entity_vec(&self, id: EntityId) -> Result<Vec<f64>> {
        lookup(&self.entities, id.0, "entity id")
    }

    pub fn relation_vec(&self, id: RelationId) -> Result<Vec<f64>> {
        lookup(&self.relations, id.0, "relation id")
    }

    pub fn forward(&self, head: EntityId, relations: &[RelationId]) -> Result<ForwardTrace> {
        if relations.is_empty() {
            return Err(Error::EmptySequence);
        }
        let e_h = self.entity_vec(head)?;
        let mut steps = Vec::with_capacity(relations.len());
        let mut predicted: Vec<Vec<f64>> = Vec::with_capacity(relations.len());
        let mut state = match self.config.arch {
            Arch::Arc1 => e_h.clone(),
            _ => vec![0.0; self.config.d_h],
        };
        for &r in relations {
            let x = self.relation_vec(r)?;
            let enc = self.encoder.forward(&state, &x)?;
            let prior = predicted.last().unwrap_or(&e_h);
            let (pred, comp) = match (&self.config.arch, &self.comp) {
                (Arch::Arc1, _) => (enc.h.clone(), CompCache::None),
                (_, CompParams::Add) => {
                    let mut p = e_h.clone();
                    add_assign(&mut p, &enc.h);
                    if self.config.arch == Arch::Arc3 {
                        add_assign(&mut p, prior);
                    }
                    (p, CompCache::Add)
                }
                (Arch::Arc2, CompParams::Gru(g)) => {
                    let c = g.forward(&e_h, &enc.h)?;
                    (c.h.clone(), CompCache::Gru(c))
                }
                (Arch::Arc3, CompParams::EGru(g)) => {
                    let c = g.forward(&e_h, prior, &enc.h)?;
                    (c.out.clone(), CompCache::EGru(c))
                }
                _ => return Err(Error::Config("composition does not match architecture".into())),
            };
            state = enc.h.clone();
            predicted.push(pred);
            steps.push(StepCache { encoder: enc, comp });
        }
        Ok(ForwardTrace {
            head,
            relations: relations.to_vec(),
            head_embedding: e_h,
            predicted,
            steps,
        })
    }

    /// Predicted embeddings `ê_1 … ê_t`.
    pub fn predict(&self, head: EntityId, relations: &[RelationId]) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward(head, relations)?.predicted)
    }

    /// Backpropagation through the whole unrolled recurrence. `d_pred[i]` is
    /// `∂L/∂ê_{i+1}`; gradients are added to every parameter and to the head
    /// and relation embedding rows.
    pub fn backward(&mut self, trace: &ForwardTrace, d_pred: &[Vec<f64>]) {
        let t = trace.len();
        let d_state = self.encoder.hidden_dim();
        let d_e = self.config.d_e;
        let mut d_head = vec![0.0; d_e];
        // ∂L/∂h_i arriving from step i+1's encoder
        let mut d_hidden_next = vec![0.0; d_state];
        // ∂L/∂ê_i arriving from step i+1 (ARC1 and ARC3)
        let mut d_pred_next = vec![0.0; d_e];
        let mut d_rel: Vec<Vec<f64>> = Vec::with_capacity(t);

        for i in (0..t).rev() {
            let step = &trace.steps[i];
            let mut d_out = d_pred[i].clone();
            add_assign(&mut d_out, &d_pred_next);
            d_pred_next.iter_mut().for_each(|x| *x = 0.0);

            let mut d_h = core::mem::replace(&mut d_hidden_next, vec![0.0; d_state]);
            match (&mut self.comp, &step.comp) {
                (_, CompCache::None) => add_assign(&mut d_h, &d_out),
                (_, CompCache::Add) => {
                    add_assign(&mut d_h, &d_out);
                    add_assign(&mut d_head, &d_out);
                    if self.config.arch == Arch::Arc3 {
                        d_pred_next.copy_from_slice(&d_out);
                    }
                }
                (CompParams::Gru(g), CompCache::Gru(c)) => {
                    let mut d_e_h = vec![0.0; d_e];
                    g.backward(c, &d_out, &mut d_e_h, &mut d_h);
                    add_assign(&mut d_head, &d_e_h);
                }
                (CompParams::EGru(g), CompCache::EGru(c)) => {
                    let grads = g.backward(c, &d_out);
                    add_assign(&mut d_h, &grads.hidden);
                    add_assign(&mut d_head, &grads.head);
                    d_pred_next.copy_from_slice(&grads.prior);
                }
                _ => unreachable!("trace produced by a different composition"),
            }

            let mut d_x = vec![0.0; self.config.d_r];
            let mut d_prev_state = vec![0.0; d_state];
            self.encoder.backward(&step.encoder, &d_h, &mut d_prev_state, &mut d_x);
            d_rel.push(d_x);
            if self.config.arch == Arch::Arc1 {
                // the previous state is ê_{i-1}
                d_pred_next.copy_from_slice(&d_prev_state);
            } else {
                d_hidden_next = d_prev_state;
            }
        }
        // ê_0 = e_h for ARC1 and ARC3
        add_assign(&mut d_head, &d_pred_next);

        if !trace.head.is_unk() {
            add_assign(self.entities.grad.row_mut(trace.head.index()), &d_head);
        }
        for (d_x, r) in d_rel.iter().zip(trace.relations.iter().rev()) {
            if !r.is_unk() {
                add_assign(self.relations.grad.row_mut(r.index()), d_x);
            }
        }
    }

    /// Sequence loss of one path for fixed targets.
    pub fn path_loss(&self, head: EntityId, relations: &[RelationId], targets: &[Target]) -> Result<f64> {
        let trace = self.forward(head, relations)?;
        self.targets_loss(&trace, targets)
    }

    fn targets_loss(&self, trace: &ForwardTrace, targets: &[Target]) -> Result<f64> {
        let mut rows: Vec<(usize, Vec<f64>, Vec<Vec<f64>>)> = Vec::with_capacity(targets.len());
        for t in targets {
            let negs = t
                .negatives
                .iter()
                .map(|&n| self.entity_vec(n))
                .collect::<Result<Vec<_>>>()?;
            rows.push((t.position, self.entity_vec(t.gold)?, negs));
        }
        let terms: Vec<SeqTerm<'_>> = rows
            .iter()
            .map(|(p, g, n)| SeqTerm {
                position: *p,
                gold: g,
                negatives: n.iter().map(Vec::as_slice).collect(),
            })
            .collect();
        sequence_loss(&trace.predicted, &terms, self.config.margin, self.config.similarity)
    }

    /// Adds `scale ·` the gradient of [`RopModel::path_loss`] and returns the
    /// (unscaled) loss.
    pub fn accumulate_path_grad(
        &mut self,
        head: EntityId,
        relations: &[RelationId],
        targets: &[Target],
        scale: f64,
    ) -> Result<f64> {
        let trace = self.forward(head, relations)?;
        let sim = self.config.similarity;
        let margin = self.config.margin;
        let mut d_pred = vec![vec![0.0; self.config.d_e]; trace.len()];
        let mut loss = 0.0;
        for t in targets {
            let i = t
                .position
                .checked_sub(1)
                .filter(|&i| i < trace.len())
                .ok_or_else(|| Error::InvalidPath(format!("position {} out of range", t.position)))?;
            let pred = &trace.predicted[i];
            let gold = self.entity_vec(t.gold)?;
            let pos = sim.eval(&gold, pred)?;
            let mut d_gold = vec![0.0; gold.len()];
            let mut active = 0usize;
            for &n in &t.negatives {
                let neg = self.entity_vec(n)?;
                let s = sim.eval(&neg, pred)?;
                loss += margin_loss(pos, s, margin);
                if hinge_active(pos, s, margin) && scale != 0.0 {
                    active += 1;
                    let mut d_neg = vec![0.0; neg.len()];
                    sim.backward(&neg, pred, scale, &mut d_neg, &mut d_pred[i]);
                    if !n.is_unk() {
                        add_assign(self.entities.grad.row_mut(n.index()), &d_neg);
                    }
                }
            }
            if active > 0 {
                sim.backward(&gold, pred, -scale * active as f64, &mut d_gold, &mut d_pred[i]);
                if !t.gold.is_unk() {
                    add_assign(self.entities.grad.row_mut(t.gold.index()), &d_gold);
                }
            }
        }
        if scale != 0.0 {
            self.backward(&trace, &d_pred);
        }
        Ok(loss)
    }
}

fn lookup(p: &Param, id: u32, what: &'static str) -> Result<Vec<f64>> {
    if id == u32::MAX {
        return Ok(vec![0.0; p.value.cols()]);
    }
    let i = id as usize;
    if i >= p.value.rows() {
        return Err(Error::Dimension {
            what,
            expected: p.value.rows(),
            got: i,
        });
    }
    Ok(p.value.row(i).to_vec())
}

impl Parameterized for RopModel {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("entities", &self.entities);
        f("relations", &self.relations);
        for (n, p) in self.encoder.params() {
            f(&format!("encoder.{n}"), p);
        }
        match &self.comp {
            CompParams::Gru(g) => {
                for (n, p) in g.params() {
                    f(&format!("comp.{n}"), p);
                }
            }
            CompParams::EGru(g) => {
                for (n, p) in g.params() {
                    f(&format!("comp.{n}"), p);
                }
            }
            CompParams::None | CompParams::Add => {}
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("entities", &mut self.entities);
        f("relations", &mut self.relations);
        for (n, p) in self.encoder.params_mut() {
            f(&format!("encoder.{n}"), p);
        }
        match &mut self.comp {
            CompParams::Gru(g) => {
                for (n, p) in g.params_mut() {
                    f(&format!("comp.{n}"), p);
                }
            }
            CompParams::EGru(g) => {
                for (n, p) in g.params_mut() {
                    f(&format!("comp.{n}"), p);
                }
            }
            CompParams::None | CompParams::Add => {}
        }
    }
}

/// `forward` restricted to ARC1 models.
pub fn forward_arc1(model: &RopModel, head: EntityId, relations: &[RelationId]) -> Result<Vec<Vec<f64>>> {
    expect_arch(model, Arch::Arc1)?;
    model.predict(head, relations)
}

/// ARC2 forward: encoder states `h_1 … h_t` and predictions `ê_1 … ê_t`.
pub fn forward_arc2(
    model: &RopModel,
    head: EntityId,
    relations: &[RelationId],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    expect_arch(model, Arch::Arc2)?;
    let trace = model.forward(head, relations)?;
    Ok((trace.hidden(), trace.predicted))
}

pub fn forward_arc3(model: &RopModel, head: EntityId, relations: &[RelationId]) -> Result<Vec<Vec<f64>>> {
    expect_arch(model, Arch::Arc3)?;
    model.predict(head, relations)
}

fn expect_arch(model: &RopModel, arch: Arch) -> Result<()> {
    if model.config.arch == arch {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "model is {}, expected {}",
            model.config.arch.name(),
            arch.name()
        )))
    }
}
