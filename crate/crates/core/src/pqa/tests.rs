use super::*;
use alloc::vec;
use crate::numerics::Parameterized;
use crate::rng_from_seed;
use crate::rop::{Arch, Composition, RopConfig};
use proptest::prelude::*;
use rand::Rng as _;

fn result(rank: usize, quantile: f64, length: usize, query: usize) -> RankResult {
    RankResult {
        query,
        gold: EntityId(0),
        rank,
        candidates: 20,
        quantile,
        length,
        unk: false,
    }
}

/// Sort-based oracle: place the gold after every incorrect candidate with
/// an equal score, read off its position.
fn sort_oracle(gold: f64, incorrect: &[f64]) -> (usize, f64) {
    let mut all: Vec<(f64, u8)> = incorrect.iter().map(|&s| (s, 0)).collect();
    all.push((gold, 1));
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let pos = all.iter().position(|x| x.1 == 1).unwrap();
    let below = all.len() - 1 - pos;
    let q = if incorrect.is_empty() { 1.0 } else { below as f64 / incorrect.len() as f64 };
    (pos + 1, q)
}

#[test]
fn rank_examples() {
    assert_eq!(rank_from_scores(0.5, &[0.9, 0.1, 0.2, 0.3]), (2, 0.75));
    assert_eq!(rank_from_scores(0.95, &[0.9, 0.1, 0.2, 0.3]), (1, 1.0));
    // ties go against the gold
    assert_eq!(rank_from_scores(0.5, &[0.5, 0.1]), (2, 0.5));
}

#[test]
fn rank_matches_sort_oracle() {
    let mut rng = rng_from_seed(11);
    for _ in 0..500 {
        let n = rng.gen_range(0..40);
        let inc: Vec<f64> = (0..n).map(|_| rng.gen_range(0..12) as f64 / 11.0).collect();
        let gold = rng.gen_range(0..12) as f64 / 11.0;
        assert_eq!(rank_from_scores(gold, &inc), sort_oracle(gold, &inc));
    }
}

#[test]
fn metric_examples() {
    let perfect = [result(1, 1.0, 1, 0), result(1, 1.0, 2, 1)];
    assert_eq!(hits_at_10(&perfect).unwrap(), 100.0);
    assert_eq!(mean_quantile(&perfect).unwrap(), 100.0);
    let (rank, q) = rank_from_scores(0.5, &[[0.9; 10].as_slice(), &[0.1; 9]].concat());
    assert_eq!(rank, 11);
    let one = [result(rank, q, 1, 0)];
    assert_eq!(hits_at_10(&one).unwrap(), 0.0);
    assert_eq!(mean_quantile(&one).unwrap(), 9.0 / 19.0 * 100.0);
    assert!(hits_at_10(&[]).is_err());
    assert!(mean_quantile(&[]).is_err());
}

#[test]
fn metrics_match_oracle() {
    let mut rng = rng_from_seed(5);
    let rs: Vec<RankResult> = (0..1000)
        .map(|i| result(rng.gen_range(1..40), rng.gen_range(0.0..=1.0), 1, i))
        .collect();
    let h = rs.iter().filter(|r| r.rank < 11).count() as f64 / 10.0;
    let mut mq = 0.0;
    for r in &rs {
        mq += r.quantile;
    }
    assert!((hits_at_10(&rs).unwrap() - h).abs() < 1e-12);
    assert!((mean_quantile(&rs).unwrap() - mq / 10.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn rank_invariant_under_monotone_maps(gold in -3.0f64..3.0, inc in prop::collection::vec(-3.0f64..3.0, 0..30)) {
        let f = |x: f64| libm::exp(0.7 * x) + 2.0;
        let mapped: Vec<f64> = inc.iter().map(|&x| f(x)).collect();
        prop_assert_eq!(rank_from_scores(gold, &inc), rank_from_scores(f(gold), &mapped));
    }

    #[test]
    fn metrics_permutation_invariant(ranks in prop::collection::vec((1usize..50, 0.0f64..=1.0), 1..40), seed in 0u64..1000) {
        let rs: Vec<RankResult> = ranks.iter().enumerate().map(|(i, &(r, q))| result(r, q, 1, i)).collect();
        let mut shuffled = rs.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng_from_seed(seed));
        prop_assert_eq!(hits_at_10(&rs).unwrap(), hits_at_10(&shuffled).unwrap());
        prop_assert!((mean_quantile(&rs).unwrap() - mean_quantile(&shuffled).unwrap()).abs() < 1e-9);
    }
}

fn toy_model(seed: u64) -> (RopModel, Vocab) {
    let mut v = Vocab::new();
    for i in 0..12 {
        v.intern_entity(&alloc::format!("e{i:02}")).unwrap();
    }
    for r in ["a", "*a", "b"] {
        v.intern_relation(r).unwrap();
    }
    let cfg = RopConfig::new(Arch::Arc3, Composition::EGru, 6);
    (RopModel::new(cfg, 12, 3, &mut rng_from_seed(seed)).unwrap(), v)
}

#[test]
fn filtered_ranking_ignores_other_golds() {
    let (m, _) = toy_model(1);
    let mut pool = CandidatePool::new(12);
    for t in [2, 3, 4, 6, 8, 9, 10] {
        pool.observe(RelationId(2), EntityId(t));
    }
    let q = PqaQuery::new(EntityId(0), vec![RelationId(0), RelationId(2)], vec![EntityId(3)]);
    let alone = rank_tail(&m, &pool, &q, 0).unwrap()[0];
    assert_eq!(alone.candidates, 7);
    for extra in [1, 5, 7, 11] {
        let q2 = PqaQuery::new(q.head, q.relations.clone(), vec![EntityId(3), EntityId(extra)]);
        let rs = rank_tail(&m, &pool, &q2, 0).unwrap();
        assert_eq!(rs.len(), 2);
        let same = rs.iter().find(|r| r.gold == EntityId(3)).unwrap();
        assert_eq!((same.rank, same.quantile, same.candidates), (alone.rank, alone.quantile, alone.candidates));
    }
}

#[test]
fn candidate_pool_restricts_and_falls_back() {
    let p = |h, r, t| PathInstance::base(EntityId(h), vec![RelationId(r)], EntityId(t)).unwrap();
    let pool = CandidatePool::from_paths(&[p(0, 0, 4), p(1, 0, 5), p(1, 1, 6)], 12);
    assert_eq!(pool.candidates(Some(RelationId(0)), &[EntityId(9)]), vec![EntityId(4), EntityId(5), EntityId(9)]);
    assert_eq!(pool.candidates(Some(RelationId(2)), &[]).len(), 12);
    let (m, v) = toy_model(2);
    let q = PqaQuery::new(EntityId(2), vec![RelationId(1), RelationId(0)], vec![EntityId(4)]);
    let r = rank_tail(&m, &pool, &q, 3).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!((r[0].candidates, r[0].query, r[0].length), (2, 3, 2));
    let top = top_k(&m, &pool, &q, 5, &v).unwrap();
    assert_eq!(top.len(), 2);
    assert!(top[0].1 >= top[1].1);
}

#[test]
fn unknown_tokens_are_flagged_not_fatal() {
    let (m, _) = toy_model(3);
    let q = PqaQuery::new(EntityId::UNK, vec![RelationId(0), RelationId::UNK], vec![EntityId(1)]);
    let r = rank_tail(&m, &CandidatePool::full_vocab(12), &q, 0).unwrap();
    assert!(r[0].unk);
}

#[test]
fn queries_group_tails() {
    let p = |h, rs: &[u32], t| PathInstance::base(EntityId(h), rs.iter().map(|&r| RelationId(r)).collect(), EntityId(t)).unwrap();
    let qs = queries_from_paths(&[p(1, &[0, 1], 3), p(0, &[2], 5), p(1, &[0, 1], 2), p(1, &[0, 1], 3)]);
    assert_eq!(qs.len(), 2);
    assert_eq!(qs[1].gold_tails, vec![EntityId(2), EntityId(3)]);
}

#[test]
fn length_report_buckets() {
    let (_, v) = toy_model(0);
    // relation 1 is "*a"
    let qs = vec![
        PqaQuery::new(EntityId(0), vec![RelationId(0)], vec![EntityId(1)]),
        PqaQuery::new(EntityId(0), vec![RelationId(1), RelationId(0)], vec![EntityId(1)]),
        PqaQuery::new(EntityId(0), vec![RelationId(1), RelationId(1), RelationId(0)], vec![EntityId(1)]),
    ];
    let rs = vec![result(1, 1.0, 1, 0), result(20, 0.5, 2, 1), result(5, 0.8, 3, 2), result(30, 0.1, 3, 2)];
    let rep = length_report(&rs, &qs, &v).unwrap();
    let pct: Vec<f64> = rep.buckets.iter().map(|b| b.inverse_pct).collect();
    assert_eq!(pct, vec![0.0, 50.0, 200.0 / 3.0]);
    let h: Vec<f64> = rep.buckets.iter().map(|b| b.h_at_10).collect();
    assert_eq!(h, vec![100.0, 0.0, 50.0]);
    // ranks: pct (1,2,3), h10 (3,1,2) → d² = 4+1+1 = 6 → 1 − 6·6/(3·8) = −0.5
    assert!((rep.spearman_inverse_vs_h10.unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(rep.buckets[2].n, 2);

    let plain = vec![PqaQuery::new(EntityId(0), vec![RelationId(2), RelationId(0)], vec![EntityId(1)])];
    let rep = length_report(&[result(1, 1.0, 2, 0)], &plain, &v).unwrap();
    assert_eq!(rep.buckets[0].inverse_pct, 0.0);
    assert_eq!(rep.spearman_inverse_vs_h10, None);
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let (mut m, _) = toy_model(4);
    let before = m.clone();
    let paths = vec![PathInstance::new(EntityId(0), vec![RelationId(0), RelationId(2)], Some(vec![EntityId(3)]), EntityId(4)).unwrap()];
    let cfg = TrainConfig { lr: 0.0, ..Default::default() };
    let s = train_pqa(&mut m, &paths, &cfg, 2, &mut rng_from_seed(0), |_| Ok(None), |_, _| true).unwrap();
    assert_eq!(s.history.len(), 2);
    assert!(s.history[0].stats.loss > 0.0);
    assert_eq!(values(&m), values(&before));
}

fn values(m: &RopModel) -> Vec<f64> {
    let mut v = Vec::new();
    m.visit_params(&mut |_, p| v.extend_from_slice(p.value.data()));
    v
}

#[test]
fn selection_restores_best_epoch() {
    let (mut m, _) = toy_model(6);
    let paths = vec![PathInstance::base(EntityId(0), vec![RelationId(0)], EntityId(4)).unwrap()];
    let mut snapshots = Vec::new();
    let scores = [0.2, 0.9, 0.4];
    let mut k = 0;
    let s = train_pqa(
        &mut m,
        &paths,
        &TrainConfig { lr: 0.5, ..Default::default() },
        3,
        &mut rng_from_seed(0),
        |_| {
            k += 1;
            Ok(Some(scores[k - 1]))
        },
        |_, model| {
            snapshots.push(model.entities.value.clone());
            true
        },
    )
    .unwrap();
    assert_eq!((s.best_epoch, s.best_score), (Some(2), Some(0.9)));
    assert_eq!(m.entities.value, snapshots[1]);
}
