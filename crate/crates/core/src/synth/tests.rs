use super::*;
use crate::pqa::denotation;

fn cycle_config() -> SynthConfig {
    SynthConfig {
        n_entities: 2,
        n_relations: 2,
        seed: 0,
        grid: None,
        rules: vec![Rule::Cycle { step: 1 }, Rule::Cycle { step: -1 }],
        all_facts: true,
        walks: 10,
        min_len: 1,
        max_len: 3,
        held_out: 0,
        reversible_pairs: 0,
    }
}

#[test]
fn two_cycle_returns_home() {
    let kg = generate_synthetic_kg(&cycle_config()).unwrap();
    let next = kg.vocab.relation("r0").unwrap();
    let e0 = kg.vocab.entity("e0").unwrap();
    assert_eq!(kg.follow(e0, &[next, next]), e0);
    assert_eq!(denotation(&kg.store, e0, &[next, next]), vec![e0]);
    assert_eq!(kg.store.len(), 4);
}

#[test]
fn commuting_world_cannot_supply_order_sensitive_pairs() {
    let mut c = cycle_config();
    c.reversible_pairs = 1;
    assert!(matches!(generate_synthetic_kg(&c), Err(Error::Generation(_))));
}

#[test]
fn infeasible_configs_error() {
    let mut c = cycle_config();
    c.rules = vec![Rule::Composite { first: 0, second: 1 }];
    assert!(generate_synthetic_kg(&c).is_err());
    let mut c = cycle_config();
    c.n_entities = 1;
    assert!(generate_synthetic_kg(&c).is_err());
    let mut c = cycle_config();
    c.rules = vec![Rule::Set { axis: 0, value: 0 }];
    assert!(generate_synthetic_kg(&c).is_err());
    let mut c = SynthConfig::standard(0);
    c.grid = Some(vec![5, 5]);
    assert!(generate_synthetic_kg(&c).is_err());
    let mut c = SynthConfig::standard(0);
    c.rules[0] = Rule::Set { axis: 0, value: 6 };
    assert!(generate_synthetic_kg(&c).is_err());
    let mut c = cycle_config();
    c.rules.push(Rule::Permutation);
    assert!(generate_synthetic_kg(&c).is_err());
}

#[test]
fn composite_rule_composes() {
    let mut c = cycle_config();
    c.n_entities = 7;
    c.n_relations = 3;
    c.rules = vec![Rule::Permutation, Rule::Cycle { step: 3 }, Rule::Composite { first: 0, second: 1 }];
    let kg = generate_synthetic_kg(&c).unwrap();
    for h in 0..7 {
        let h = EntityId(h);
        assert_eq!(kg.follow(h, &[RelationId(2)]), kg.follow(h, &[RelationId(0), RelationId(1)]));
    }
}

#[test]
fn grid_rules() {
    let g = [6, 6, 6];
    assert_eq!(grid_coords(&g, grid_index(&g, &[1, 4, 5])), vec![1, 4, 5]);
    let kg = generate_synthetic_kg(&SynthConfig::standard(1)).unwrap();
    let e = EntityId(grid_index(&g, &[5, 2, 3]) as u32);
    // step +1 on axis 0 at the wall stays put; set-then-step differs from step-then-set
    assert_eq!(kg.follow(e, &[RelationId(1)]), e);
    let a = kg.follow(e, &[RelationId(0), RelationId(1)]);
    let b = kg.follow(e, &[RelationId(1), RelationId(0)]);
    assert_eq!(grid_coords(&g, a.index()), vec![1, 2, 3]);
    assert_eq!(grid_coords(&g, b.index()), vec![0, 2, 3]);
}

#[test]
fn standard_world_shape() {
    let kg = generate_synthetic_kg(&SynthConfig::standard(7)).unwrap();
    assert_eq!(kg.vocab.n_entities(), 216);
    assert_eq!(kg.train.len(), 216 * 8 + 3_300);
    assert!(kg.train.iter().all(|p| p.is_enhanced() && p.is_valid_in(&kg.store) && (1..=4).contains(&p.len())));
    assert_eq!(kg.held_out.len(), 500 + 200);
    assert_eq!(kg.reversible.len(), 100);

    let seen: BTreeSet<(EntityId, Vec<RelationId>)> = kg.train.iter().map(|p| (p.head, p.relations.clone())).collect();
    let mut distinct = BTreeSet::new();
    for q in &kg.held_out {
        assert!(q.len() >= 2);
        assert!(!seen.contains(&(q.head, q.relations.clone())));
        assert!(distinct.insert((q.head, q.relations.clone())));
        assert_eq!(q.gold_tails, denotation(&kg.store, q.head, &q.relations));
    }
    for &(a, b) in &kg.reversible {
        let (qa, qb) = (&kg.held_out[a], &kg.held_out[b]);
        let mut rev = qa.relations.clone();
        rev.reverse();
        assert_eq!((qa.head, rev), (qb.head, qb.relations.clone()));
        assert_ne!(qa.gold_tails, qb.gold_tails);
    }
}

#[test]
fn generation_is_deterministic() {
    let a = generate_synthetic_kg(&SynthConfig::standard(3)).unwrap();
    assert_eq!(a, generate_synthetic_kg(&SynthConfig::standard(3)).unwrap());
    assert_ne!(a.train, generate_synthetic_kg(&SynthConfig::standard(4)).unwrap().train);
    let k = generate_synthetic_kbc(&SynthKbcConfig::standard(3)).unwrap();
    assert_eq!(k, generate_synthetic_kbc(&SynthKbcConfig::standard(3)).unwrap());
}

#[test]
fn kbc_labels_follow_the_composite() {
    let cfg = SynthKbcConfig::standard(5);
    let k = generate_synthetic_kbc(&cfg).unwrap();
    let tables = build_tables(&cfg.world, &mut rng_from_seed(cfg.world.seed ^ 0x6b62_6300)).unwrap();
    assert_eq!(k.dataset.queries.len(), 4);
    for (split, &(a, b)) in k.dataset.splits.iter().zip(&cfg.queries) {
        assert_eq!(split.test.len(), 18 * 4);
        assert_eq!(split.train.len(), 42 * 4);
        for ex in split.train.iter().chain(&split.test) {
            let holds = follow(&tables, ex.head, &[RelationId(a as u32), RelationId(b as u32)]) == ex.tail;
            assert_eq!(ex.label, holds);
            assert!(!ex.paths.is_empty() && ex.paths.len() <= 30);
            assert!(ex.paths.iter().all(|p| p.head == ex.head && p.tail == ex.tail && p.is_valid_in(&k.store)));
            if ex.label {
                let ab = [RelationId(a as u32), RelationId(b as u32)];
                assert!(ex.paths.iter().any(|p| p.relations == ab));
            }
        }
    }
}

#[test]
fn connecting_paths_are_exhaustive() {
    let c = SynthKbcConfig::standard(2).world;
    let tables = build_tables(&c, &mut rng_from_seed(9)).unwrap();
    let (h, t) = (EntityId(4), EntityId(17));
    let found = connecting_paths(&tables, h, t, 3, usize::MAX);
    let mut brute = 0;
    for len in 1..=3u32 {
        for code in 0..6u32.pow(len) {
            let rels: Vec<RelationId> = (0..len).map(|i| RelationId(code / 6u32.pow(i) % 6)).collect();
            if follow(&tables, h, &rels) == t {
                brute += 1;
            }
        }
    }
    assert_eq!(found.len(), brute);
    assert_eq!(connecting_paths(&tables, h, t, 3, 2).len(), brute.min(2));
}
