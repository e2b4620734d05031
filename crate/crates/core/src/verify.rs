//! Randomised gradient-check instances for every architecture and for the
//! KBC joint loss.
//!
//! Embeddings keep their normal initialisation; cell weights are redrawn in
//! `±WEIGHT_SCALE` so the gates leave their linear regime. Instances whose
//! hinge terms sit within [`KINK_BUFFER`] of the kink are redrawn: central
//! differences across a kink do not estimate the subgradient.
//!
//! At step `1e−3` a handful of entries with small gradients exceed `1e−4`
//! purely through the `O(h²)` truncation of the central difference; each
//! report carries the extrapolated estimate that separates those from a
//! wrong backward pass (see [`GradCheckReport::unexplained`]).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kbc::{BatchItem, KbcConfig, KbcModel};
use crate::kg::{EntityId, KbcExample, PathInstance, RelationId};
use crate::numerics::{grad_check, GradCheckReport, Parameterized};
use crate::rop::{path_targets, Arch, Composition, RopConfig, RopModel, Target};
use crate::train::TouchedRows;
use crate::{rng_from_seed, Rng};

pub const KINK_BUFFER: f64 = 0.02;
pub const FD_STEP: f64 = 1e-3;
pub const FD_TOL: f64 = 1e-4;

const N_ENTITIES: usize = 7;
const N_RELATIONS: usize = 4;
const WEIGHT_SCALE: f64 = 0.6;
const MAX_ATTEMPTS: usize = 200;

/// Every legal architecture/composition pair.
pub const ROP_VARIANTS: [(Arch, Composition); 5] = [
    (Arch::Arc1, Composition::None),
    (Arch::Arc2, Composition::Add),
    (Arch::Arc2, Composition::Gru),
    (Arch::Arc3, Composition::Add),
    (Arch::Arc3, Composition::EGru),
];

/// Variants whose sequence loss the KBC task uses.
pub const KBC_VARIANTS: [(Arch, Composition); 3] = [
    (Arch::Arc1, Composition::None),
    (Arch::Arc2, Composition::Gru),
    (Arch::Arc3, Composition::EGru),
];

#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub name: String,
    pub seed: u64,
    pub report: GradCheckReport,
}

fn randomize<M: Parameterized>(m: &mut M, rng: &mut Rng) {
    m.visit_params_mut(&mut |name, p| {
        if matches!(name, "entities" | "relations" | "queries") {
            return;
        }
        for v in p.value.data_mut() {
            *v = rng.gen_range(-WEIGHT_SCALE..WEIGHT_SCALE);
        }
    });
}

fn random_path(len: usize, rng: &mut Rng) -> PathInstance {
    let e = |rng: &mut Rng| EntityId(rng.gen_range(0..N_ENTITIES as u32));
    let head = e(rng);
    let relations = (0..len)
        .map(|_| RelationId(rng.gen_range(0..N_RELATIONS as u32)))
        .collect();
    let mids = (1..len).map(|_| e(rng)).collect();
    PathInstance::new(head, relations, Some(mids), e(rng)).expect("valid lengths")
}

fn rop_hinges(model: &RopModel, path: &PathInstance, targets: &[Target]) -> Result<Vec<f64>> {
    let trace = model.forward(path.head, &path.relations)?;
    let sim = model.config.similarity;
    let mut out = Vec::new();
    for t in targets {
        let pred = &trace.predicted[t.position - 1];
        let pos = sim.eval(&model.entity_vec(t.gold)?, pred)?;
        for &n in &t.negatives {
            out.push(model.config.margin + sim.eval(&model.entity_vec(n)?, pred)? - pos);
        }
    }
    Ok(out)
}

fn near_kink(args: &[f64]) -> bool {
    args.iter().any(|a| a.abs() < KINK_BUFFER)
}

fn corrupt<M: Parameterized>(m: &mut M) {
    let mut done = false;
    m.visit_params_mut(&mut |name, p| {
        if !done && name.ends_with("u_z") {
            p.grad.data_mut()[0] += 0.5;
            done = true;
        }
    });
}

/// Sequence-loss gradient check of one random path of length `len`.
pub fn check_rop_case(arch: Arch, comp: Composition, len: usize, dim: usize, seed: u64, sabotage: bool) -> Result<CaseReport> {
    let mut rng = rng_from_seed(seed);
    let mut cfg = RopConfig::new(arch, comp, dim);
    cfg.margin = 0.5;
    cfg.negatives = 2;
    for _ in 0..MAX_ATTEMPTS {
        let mut model = RopModel::new(cfg.clone(), N_ENTITIES, N_RELATIONS, &mut rng)?;
        randomize(&mut model, &mut rng);
        let path = random_path(len, &mut rng);
        let targets = path_targets(&path, N_ENTITIES, cfg.negatives, &mut rng);
        if near_kink(&rop_hinges(&model, &path, &targets)?) {
            continue;
        }
        model.zero_grads();
        model.accumulate_path_grad(path.head, &path.relations, &targets, 1.0)?;
        if sabotage {
            corrupt(&mut model);
        }
        let report = grad_check(
            &mut model,
            |m: &RopModel| m.path_loss(path.head, &path.relations, &targets).unwrap_or(f64::NAN),
            FD_STEP,
            FD_TOL,
        );
        return Ok(CaseReport {
            name: format!("{}/{}/t={len}", arch.name(), comp.name()),
            seed,
            report,
        });
    }
    Err(Error::Generation(format!("no kink-free instance for seed {seed}")))
}

/// Joint KBC loss on a two-pair batch (one positive, one negative pair of
/// the same query relation, two paths each).
pub fn check_kbc_case(arch: Arch, comp: Composition, dim: usize, seed: u64, sabotage: bool) -> Result<CaseReport> {
    let mut rng = rng_from_seed(seed);
    let mut rop = RopConfig::new(arch, comp, dim);
    rop.negatives = 2;
    let cfg = KbcConfig::new(rop);
    for _ in 0..MAX_ATTEMPTS {
        let mut model = KbcModel::new(cfg.clone(), N_ENTITIES, N_RELATIONS, 2, &mut rng)?;
        randomize(&mut model, &mut rng);
        let examples: Vec<KbcExample> = [true, false]
            .into_iter()
            .map(|label| {
                let paths: Vec<PathInstance> = (0..2)
                    .map(|_| {
                        let len = rng.gen_range(1..=3);
                        random_path(len, &mut rng)
                    })
                    .collect();
                KbcExample {
                    head: paths[0].head,
                    tail: paths[0].tail,
                    label,
                    paths,
                }
            })
            .collect();
        let query = rng.gen_range(0..2);
        let batch: Vec<BatchItem<'_>> = examples
            .iter()
            .map(|example| BatchItem { query, example })
            .collect();
        let targets = model.sample_targets(&batch, &mut rng);

        let mut hinges = Vec::new();
        for (item, tgts) in batch.iter().zip(&targets) {
            for (p, t) in item.example.paths.iter().zip(tgts) {
                hinges.extend(rop_hinges(&model.rop, p, t)?);
            }
        }
        let r = model.queries.value.row(query).to_vec();
        let sims = |ex: &KbcExample| -> Result<Vec<f64>> {
            ex.paths
                .iter()
                .map(|p| cfg.similarity.eval(&model.encode(&p.relations)?, &r))
                .collect()
        };
        let (pos, neg) = (sims(&examples[0])?, sims(&examples[1])?);
        for sn in &neg {
            hinges.extend(pos.iter().map(|sp| cfg.beta + sn - sp));
        }
        if near_kink(&hinges) {
            continue;
        }

        model.zero_grads();
        model.accumulate_batch_grad(&batch, &targets, &mut TouchedRows::default())?;
        if sabotage {
            corrupt(&mut model);
        }
        let report = grad_check(
            &mut model,
            |m: &KbcModel| {
                m.batch_loss(&batch, &targets)
                    .map(|l| l.total(&m.config))
                    .unwrap_or(f64::NAN)
            },
            FD_STEP,
            FD_TOL,
        );
        return Ok(CaseReport {
            name: format!("kbc/{}/{}", arch.name(), comp.name()),
            seed,
            report,
        });
    }
    Err(Error::Generation(format!("no kink-free instance for seed {seed}")))
}

/// The full suite: every ROP variant at `t ∈ {1, 2, 4}` and every KBC
/// variant, each over `seeds` seeds.
pub fn run_suite(dim: usize, seeds: u64, sabotage: bool) -> Result<Vec<CaseReport>> {
    let mut out = Vec::new();
    for (arch, comp) in ROP_VARIANTS {
        for len in [1, 2, 4] {
            for s in 0..seeds {
                out.push(check_rop_case(arch, comp, len, dim, seed_for(s, len), sabotage)?);
            }
        }
    }
    for (arch, comp) in KBC_VARIANTS {
        for s in 0..seeds {
            out.push(check_kbc_case(arch, comp, dim, seed_for(s, 100), sabotage)?);
        }
    }
    Ok(out)
}

fn seed_for(s: u64, salt: usize) -> u64 {
    s * 1_000 + salt as u64
}

