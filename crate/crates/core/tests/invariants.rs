use proptest::prelude::*;
use rop_core::kg::{enhance_path, inverse_token};
use rop_core::{rng_from_seed, EntityId, PathInstance, RelationId, TripleStore, Vocab};

fn store_strategy() -> impl Strategy<Value = Vec<(u32, u32, u32)>> {
    prop::collection::vec((0u32..6, 0u32..3, 0u32..6), 0..30)
}

fn build(triples: &[(u32, u32, u32)]) -> (TripleStore, Vocab) {
    let mut v = Vocab::new();
    for i in 0..6 {
        v.intern_entity(&format!("e{i}")).unwrap();
    }
    for i in 0..3 {
        v.intern_relation(&format!("r{i}")).unwrap();
    }
    let mut s = TripleStore::new();
    for &(h, r, t) in triples {
        s.insert(EntityId(h), RelationId(r), EntityId(t));
    }
    (s, v)
}

proptest! {
    #[test]
    fn inverse_augmentation_is_symmetric_and_idempotent(triples in store_strategy()) {
        let (s, mut v) = build(&triples);
        let aug = s.add_inverses(&mut v).unwrap();
        for (h, r, t) in aug.iter() {
            let inv = v.relation(&inverse_token(v.relation_name(r))).unwrap();
            prop_assert!(aug.contains(t, inv, h));
        }
        for (h, r, t) in s.iter() {
            prop_assert!(aug.contains(h, r, t));
        }
        prop_assert_eq!(aug.len(), 2 * s.len());
        let again = aug.add_inverses(&mut v).unwrap();
        prop_assert_eq!(again.len(), aug.len());
    }

    #[test]
    fn successor_index_matches_the_triples(triples in store_strategy()) {
        let (s, _) = build(&triples);
        let mut from_index = Vec::new();
        for h in 0..6 {
            for r in 0..3 {
                let succ = s.successors(EntityId(h), RelationId(r));
                prop_assert!(succ.windows(2).all(|w| w[0] < w[1]));
                from_index.extend(succ.iter().map(|&t| (EntityId(h), RelationId(r), t)));
            }
        }
        let mut direct: Vec<_> = s.iter().collect();
        direct.sort();
        prop_assert_eq!(from_index, direct);
    }

    #[test]
    fn enhanced_paths_are_walks_in_the_store(triples in store_strategy(), walk in prop::collection::vec(0usize..100, 1..5), seed in 0u64..1000) {
        let (s, _) = build(&triples);
        prop_assume!(!s.is_empty());
        // Follow an actual walk so that a realisation exists.
        let facts: Vec<_> = s.iter().collect();
        let (h0, _, _) = facts[walk[0] % facts.len()];
        let mut cur = h0;
        let mut rels = Vec::new();
        for &w in &walk {
            let out: Vec<_> = facts.iter().filter(|(h, _, _)| *h == cur).collect();
            if out.is_empty() {
                break;
            }
            let (_, r, t) = *out[w % out.len()];
            rels.push(r);
            cur = t;
        }
        prop_assume!(!rels.is_empty());
        let base = PathInstance::base(h0, rels, cur).unwrap();
        let a = enhance_path(&s, &base, &mut rng_from_seed(seed)).unwrap();
        prop_assert!(a.is_valid_in(&s));
        prop_assert_eq!(a.intermediates.as_ref().unwrap().len(), a.len() - 1);
        prop_assert_eq!(enhance_path(&s, &base, &mut rng_from_seed(seed)).unwrap(), a);
    }

    #[test]
    fn truncation_keeps_a_prefix(len in 1usize..12, max in 1usize..10) {
        let rels: Vec<RelationId> = (0..len as u32).map(RelationId).collect();
        let mids: Vec<EntityId> = (0..len as u32 - 1).map(EntityId).collect();
        let p = PathInstance::new(EntityId(100), rels.clone(), Some(mids), EntityId(200)).unwrap();
        let t = p.truncated(max);
        prop_assert_eq!(t.len(), len.min(max));
        prop_assert_eq!(&t.relations[..], &rels[..len.min(max)]);
        prop_assert_eq!(t.head, p.head);
    }
}
