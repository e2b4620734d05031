//! Seeded synthetic worlds for desk-scale verification.
//!
//! Every relation is a total function on the entities, so each path query
//! has exactly one answer. Relations are given by [`Rule`]s: seeded random
//! permutations, steps around a cycle, or the composite of two other
//! relations.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KbcDataset, KbcExample, KbcSplit, PathInstance, RelationId, TripleStore, Vocab};
use crate::pqa::PqaQuery;
use crate::{rng_from_seed, Rng};

#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    /// A seeded random permutation of the entities.
    Permutation,
    /// `e_i ↦ e_{(i + step) mod n}`.
    Cycle { step: i64 },
    /// `first` then `second`; both must be defined by earlier rules.
    Composite { first: usize, second: usize },
    /// Grid worlds only: overwrite one coordinate.
    Set { axis: usize, value: usize },
    /// Grid worlds only: move along one axis, stopping at the walls.
    Step { axis: usize, delta: i64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    pub seed: u64,
    /// Axis sizes when entities are the cells of a grid (row-major, first
    /// axis slowest); their product must equal `n_entities`.
    pub grid: Option<Vec<usize>>,
    /// One rule per relation; missing trailing rules default to
    /// [`Rule::Permutation`].
    pub rules: Vec<Rule>,
    /// Add every one-hop fact as a length-1 training path.
    pub all_facts: bool,
    /// Random-walk training paths, on top of the one-hop facts.
    pub walks: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Held-out compositional queries (lengths 2..=max_len).
    pub held_out: usize,
    /// Held-out `(h, r1→r2)` / `(h, r2→r1)` query pairs with different
    /// answers; generation fails if fewer can be found.
    pub reversible_pairs: usize,
}

impl SynthConfig {
    /// A 6×6×6 grid (216 entities) with 8 relations: three "set the
    /// coordinate to 0" relations and five clipped unit steps. 1,728 one-hop
    /// facts plus 3,300 walks of length 2–4 (≈5,000 training paths).
    /// Setting and stepping along the same axis do not commute.
    pub fn standard(seed: u64) -> Self {
        SynthConfig {
            n_entities: 216,
            n_relations: 8,
            seed,
            grid: Some(vec![6, 6, 6]),
            rules: vec![
                Rule::Set { axis: 0, value: 0 },
                Rule::Step { axis: 0, delta: 1 },
                Rule::Set { axis: 1, value: 0 },
                Rule::Step { axis: 1, delta: 1 },
                Rule::Set { axis: 2, value: 0 },
                Rule::Step { axis: 2, delta: 1 },
                Rule::Step { axis: 0, delta: -1 },
                Rule::Step { axis: 2, delta: -1 },
            ],
            all_facts: true,
            walks: 3_300,
            min_len: 2,
            max_len: 4,
            held_out: 500,
            reversible_pairs: 100,
        }
    }
}

/// A functional knowledge graph with its training corpus and held-out
/// queries.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticKg {
    pub vocab: Vocab,
    pub store: TripleStore,
    /// `tables[r][e]` is the unique successor of `e` under `r`.
    pub tables: Vec<Vec<EntityId>>,
    pub train: Vec<PathInstance>,
    pub held_out: Vec<PqaQuery>,
    /// Index pairs into `held_out` whose relation sequences are each
    /// other's reversal and whose answers differ.
    pub reversible: Vec<(usize, usize)>,
}

impl SyntheticKg {
    pub fn follow(&self, head: EntityId, relations: &[RelationId]) -> EntityId {
        follow(&self.tables, head, relations)
    }
}

fn follow(tables: &[Vec<EntityId>], head: EntityId, relations: &[RelationId]) -> EntityId {
    relations
        .iter()
        .fold(head, |e, r| tables[r.index()][e.index()])
}

fn build_tables(cfg: &SynthConfig, rng: &mut Rng) -> Result<Vec<Vec<EntityId>>> {
    let n = cfg.n_entities;
    if n < 2 || cfg.n_relations < 1 {
        return Err(Error::Generation(format!(
            "need at least 2 entities and 1 relation, got {n} and {}",
            cfg.n_relations
        )));
    }
    if cfg.rules.len() > cfg.n_relations {
        return Err(Error::Generation(format!(
            "{} rules for {} relations",
            cfg.rules.len(),
            cfg.n_relations
        )));
    }
    if let Some(g) = &cfg.grid {
        if g.is_empty() || g.iter().any(|&s| s == 0) || g.iter().product::<usize>() != n {
            return Err(Error::Generation(format!("grid {g:?} does not tile {n} entities")));
        }
    }
    let grid_rule = |axis: usize| -> Result<&[usize]> {
        match &cfg.grid {
            Some(g) if axis < g.len() => Ok(g),
            _ => Err(Error::Generation(format!("grid rule on axis {axis} needs a grid with that axis"))),
        }
    };
    let mut tables: Vec<Vec<EntityId>> = Vec::with_capacity(cfg.n_relations);
    for r in 0..cfg.n_relations {
        let rule = cfg.rules.get(r).unwrap_or(&Rule::Permutation);
        let table = match *rule {
            Rule::Permutation => {
                let mut t: Vec<EntityId> = (0..n as u32).map(EntityId).collect();
                t.shuffle(rng);
                t
            }
            Rule::Cycle { step } => (0..n as i64)
                .map(|i| EntityId((i + step).rem_euclid(n as i64) as u32))
                .collect(),
            Rule::Composite { first, second } => {
                if first >= r || second >= r {
                    return Err(Error::Generation(format!(
                        "relation r{r}: composite of r{first} and r{second} must refer to earlier relations"
                    )));
                }
                tables[first].iter().map(|e| tables[second][e.index()]).collect()
            }
            Rule::Set { axis, value } => {
                let g = grid_rule(axis)?;
                if value >= g[axis] {
                    return Err(Error::Generation(format!("value {value} outside axis {axis} of size {}", g[axis])));
                }
                grid_map(g, axis, |_| value)
            }
            Rule::Step { axis, delta } => {
                let g = grid_rule(axis)?;
                let top = g[axis] as i64 - 1;
                grid_map(g, axis, |c| (c as i64 + delta).clamp(0, top) as usize)
            }
        };
        tables.push(table);
    }
    Ok(tables)
}

/// Grid coordinates of entity `i` (first axis slowest).
pub fn grid_coords(grid: &[usize], mut i: usize) -> Vec<usize> {
    let mut c = vec![0; grid.len()];
    for (k, &size) in grid.iter().enumerate().rev() {
        c[k] = i % size;
        i /= size;
    }
    c
}

pub fn grid_index(grid: &[usize], coords: &[usize]) -> usize {
    grid.iter().zip(coords).fold(0, |acc, (&s, &c)| acc * s + c)
}

fn grid_map(grid: &[usize], axis: usize, f: impl Fn(usize) -> usize) -> Vec<EntityId> {
    let n: usize = grid.iter().product();
    (0..n)
        .map(|i| {
            let mut c = grid_coords(grid, i);
            c[axis] = f(c[axis]);
            EntityId(grid_index(grid, &c) as u32)
        })
        .collect()
}

fn store_of(tables: &[Vec<EntityId>]) -> TripleStore {
    let mut store = TripleStore::new();
    for (r, t) in tables.iter().enumerate() {
        for (h, &tail) in t.iter().enumerate() {
            store.insert(EntityId(h as u32), RelationId(r as u32), tail);
        }
    }
    store
}

fn synth_vocab(n_entities: usize, n_relations: usize) -> Vocab {
    let mut v = Vocab::new();
    let ew = digits(n_entities);
    let rw = digits(n_relations);
    for i in 0..n_entities {
        v.intern_entity(&format!("e{i:0ew$}")).expect("fresh token");
    }
    for i in 0..n_relations {
        v.intern_relation(&format!("r{i:0rw$}")).expect("fresh token");
    }
    v
}

fn digits(n: usize) -> usize {
    let mut d = 1;
    let mut k = n.saturating_sub(1);
    while k >= 10 {
        k /= 10;
        d += 1;
    }
    d
}

fn walk(tables: &[Vec<EntityId>], head: EntityId, relations: Vec<RelationId>) -> PathInstance {
    let mut mids = Vec::with_capacity(relations.len().saturating_sub(1));
    let mut e = head;
    for (i, r) in relations.iter().enumerate() {
        e = tables[r.index()][e.index()];
        if i + 1 < relations.len() {
            mids.push(e);
        }
    }
    PathInstance::new(head, relations, Some(mids), e).expect("consistent lengths")
}

fn random_relations(n_relations: usize, len: usize, rng: &mut Rng) -> Vec<RelationId> {
    (0..len)
        .map(|_| RelationId(rng.gen_range(0..n_relations as u32)))
        .collect()
}

/// Generates the world, its enhanced training paths, held-out queries and
/// reversible pairs. Deterministic in `cfg`.
pub fn generate_synthetic_kg(cfg: &SynthConfig) -> Result<SyntheticKg> {
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Generation(format!(
            "path lengths {}..={} are empty",
            cfg.min_len, cfg.max_len
        )));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let tables = build_tables(cfg, &mut rng)?;
    let (n, m) = (cfg.n_entities, cfg.n_relations);
    let vocab = synth_vocab(n, m);
    let store = store_of(&tables);

    let mut train = Vec::new();
    if cfg.all_facts {
        for h in 0..n as u32 {
            for r in 0..m as u32 {
                train.push(walk(&tables, EntityId(h), vec![RelationId(r)]));
            }
        }
    }
    for _ in 0..cfg.walks {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let head = EntityId(rng.gen_range(0..n as u32));
        let rels = random_relations(m, len, &mut rng);
        train.push(walk(&tables, head, rels));
    }
    let seen: BTreeSet<(EntityId, &[RelationId])> =
        train.iter().map(|p| (p.head, p.relations.as_slice())).collect();

    let mut taken: BTreeSet<(EntityId, Vec<RelationId>)> = BTreeSet::new();
    let is_fresh = |h: EntityId, rels: &[RelationId], taken: &BTreeSet<(EntityId, Vec<RelationId>)>| {
        !seen.contains(&(h, rels)) && !taken.contains(&(h, rels.to_vec()))
    };

    let mut held_out = Vec::new();
    let mut reversible = Vec::new();
    let budget = 1_000 * (cfg.reversible_pairs + cfg.held_out + 1);
    let mut attempts = 0;
    if m >= 2 {
        while reversible.len() < cfg.reversible_pairs && attempts < budget {
            attempts += 1;
            let h = EntityId(rng.gen_range(0..n as u32));
            let a = RelationId(rng.gen_range(0..m as u32));
            let b = RelationId(rng.gen_range(0..m as u32));
            let (ab, ba) = (vec![a, b], vec![b, a]);
            if a == b || !is_fresh(h, &ab, &taken) || !is_fresh(h, &ba, &taken) {
                continue;
            }
            let (t_ab, t_ba) = (follow(&tables, h, &ab), follow(&tables, h, &ba));
            if t_ab == t_ba {
                continue;
            }
            taken.insert((h, ab.clone()));
            taken.insert((h, ba.clone()));
            reversible.push((held_out.len(), held_out.len() + 1));
            held_out.push(PqaQuery::new(h, ab, vec![t_ab]));
            held_out.push(PqaQuery::new(h, ba, vec![t_ba]));
        }
    }
    if reversible.len() < cfg.reversible_pairs {
        return Err(Error::Generation(format!(
            "found {} of {} order-sensitive query pairs; the relations may commute",
            reversible.len(),
            cfg.reversible_pairs
        )));
    }

    let lo = cfg.min_len.max(2).min(cfg.max_len);
    let target = held_out.len() + cfg.held_out;
    attempts = 0;
    while held_out.len() < target && attempts < budget {
        attempts += 1;
        let len = rng.gen_range(lo..=cfg.max_len);
        let h = EntityId(rng.gen_range(0..n as u32));
        let rels = random_relations(m, len, &mut rng);
        if !is_fresh(h, &rels, &taken) {
            continue;
        }
        let t = follow(&tables, h, &rels);
        taken.insert((h, rels.clone()));
        held_out.push(PqaQuery::new(h, rels, vec![t]));
    }
    if held_out.len() < target {
        return Err(Error::Generation(format!(
            "only {} held-out queries could be drawn",
            held_out.len() - 2 * reversible.len()
        )));
    }

    Ok(SyntheticKg {
        vocab,
        store,
        tables,
        train,
        held_out,
        reversible,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthKbcConfig {
    pub world: SynthConfig,
    /// Query relations as `(first, second)` relation pairs.
    pub queries: Vec<(usize, usize)>,
    /// Positive pairs per query relation (heads drawn without
    /// replacement); each gets `negatives_per_positive` negatives.
    pub positives: usize,
    pub negatives_per_positive: usize,
    /// Connecting relation sequences up to this length become the pair's
    /// paths.
    pub max_path_len: usize,
    pub max_paths: usize,
    /// Fraction of each query's pairs held out as test.
    pub test_fraction: f64,
}

impl SynthKbcConfig {
    /// 120 entities under 6 random permutations; four two-hop query
    /// relations, one of them the reversal of another.
    pub fn standard(seed: u64) -> Self {
        SynthKbcConfig {
            world: SynthConfig {
                n_entities: 120,
                n_relations: 6,
                seed,
                grid: None,
                rules: Vec::new(),
                all_facts: false,
                walks: 0,
                min_len: 1,
                max_len: 1,
                held_out: 0,
                reversible_pairs: 0,
            },
            queries: vec![(0, 1), (1, 0), (2, 3), (4, 5)],
            positives: 60,
            negatives_per_positive: 3,
            max_path_len: 3,
            max_paths: 30,
            test_fraction: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticKbc {
    pub vocab: Vocab,
    pub store: TripleStore,
    pub dataset: KbcDataset,
}

/// Every relation sequence of length `1..=max_len` leading from `head` to
/// `tail`, with intermediates, in lexicographic order of relation ids.
pub fn connecting_paths(
    tables: &[Vec<EntityId>],
    head: EntityId,
    tail: EntityId,
    max_len: usize,
    limit: usize,
) -> Vec<PathInstance> {
    let mut out = Vec::new();
    let mut stack: Vec<RelationId> = Vec::new();
    fn rec(
        tables: &[Vec<EntityId>],
        head: EntityId,
        at: EntityId,
        tail: EntityId,
        max_len: usize,
        limit: usize,
        stack: &mut Vec<RelationId>,
        out: &mut Vec<PathInstance>,
    ) {
        for r in 0..tables.len() {
            if out.len() >= limit {
                return;
            }
            let next = tables[r][at.index()];
            stack.push(RelationId(r as u32));
            if next == tail {
                out.push(walk(tables, head, stack.clone()));
            }
            if stack.len() < max_len {
                rec(tables, head, next, tail, max_len, limit, stack, out);
            }
            stack.pop();
        }
    }
    rec(tables, head, head, tail, max_len, limit, &mut stack, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.relations.cmp(&b.relations)));
    out
}

/// A KBC task whose query relations are deterministic two-hop composites:
/// a pair is positive iff `tail = second(first(head))`. Negatives are
/// other entities reachable from the same head (so they have paths too),
/// including the answer of the reversed composite where it differs.
pub fn generate_synthetic_kbc(cfg: &SynthKbcConfig) -> Result<SyntheticKbc> {
    let w = &cfg.world;
    let mut rng = rng_from_seed(w.seed ^ 0x6b62_6300);
    let tables = build_tables(w, &mut rng)?;
    let (n, m) = (w.n_entities, w.n_relations);
    if cfg.positives > n {
        return Err(Error::Generation(format!("{} positives need distinct heads among {n}", cfg.positives)));
    }
    let vocab = synth_vocab(n, m);
    let store = store_of(&tables);

    let mut queries = Vec::new();
    let mut splits = Vec::new();
    for &(a, b) in &cfg.queries {
        if a >= m || b >= m {
            return Err(Error::Generation(format!("query (r{a}, r{b}) refers to an unknown relation")));
        }
        let name = format!("q_r{a}_r{b}");
        queries.push(name);
        let (ra, rb) = (RelationId(a as u32), RelationId(b as u32));
        let mut heads: Vec<u32> = (0..n as u32).collect();
        heads.shuffle(&mut rng);
        let mut examples: Vec<Vec<KbcExample>> = Vec::new();
        for &h in heads.iter().take(cfg.positives) {
            let h = EntityId(h);
            let gold = follow(&tables, h, &[ra, rb]);
            let mut group = vec![pair_example(&tables, h, gold, true, cfg)];
            let mut used: BTreeSet<EntityId> = BTreeSet::from([gold]);
            let reversed = follow(&tables, h, &[rb, ra]);
            if used.insert(reversed) && cfg.negatives_per_positive > 0 {
                group.push(pair_example(&tables, h, reversed, false, cfg));
            }
            let mut tries = 0;
            while group.len() < cfg.negatives_per_positive + 1 && tries < 1_000 {
                tries += 1;
                let len = rng.gen_range(1..=cfg.max_path_len);
                let t = follow(&tables, h, &random_relations(m, len, &mut rng));
                if used.insert(t) {
                    group.push(pair_example(&tables, h, t, false, cfg));
                }
            }
            examples.push(group);
        }
        let n_test = libm::round(examples.len() as f64 * cfg.test_fraction) as usize;
        let test: Vec<KbcExample> = examples.drain(..n_test).flatten().collect();
        splits.push(KbcSplit {
            train: examples.into_iter().flatten().collect(),
            dev: Vec::new(),
            test,
        });
    }
    Ok(SyntheticKbc {
        vocab,
        store,
        dataset: KbcDataset { queries, splits },
    })
}

fn pair_example(tables: &[Vec<EntityId>], head: EntityId, tail: EntityId, label: bool, cfg: &SynthKbcConfig) -> KbcExample {
    KbcExample {
        head,
        tail,
        label,
        paths: connecting_paths(tables, head, tail, cfg.max_path_len, cfg.max_paths),
    }
}

/// Relation names of a path, for display.
pub fn describe(vocab: &Vocab, rels: &[RelationId]) -> String {
    let names: Vec<&str> = rels.iter().map(|&r| vocab.relation_name(r)).collect();
    names.join("→")
}

#[cfg(test)]
mod tests;
