use super::*;
use crate::kg::{KbcSplit, PathInstance};
use crate::rng_from_seed;
use crate::rop::Arch;
use crate::verify::{check_kbc_case, KBC_VARIANTS};
use rand::Rng as _;

fn names(n: usize) -> Vocab {
    let mut v = Vocab::new();
    for i in 0..n {
        v.intern_entity(&format!("e{i:02}")).unwrap();
    }
    v
}

fn pair(h: u32, t: u32, label: bool, score: f64) -> PairScore {
    PairScore {
        head: EntityId(h),
        tail: EntityId(t),
        label,
        score,
    }
}

/// Straightforward AP: for each positive, count positives ranked at or
/// above it.
fn brute_ap(scores: &[(f64, bool, String)]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a].0, scores[b].0);
        if sa > sb {
            core::cmp::Ordering::Less
        } else if sa < sb {
            core::cmp::Ordering::Greater
        } else {
            scores[a].2.cmp(&scores[b].2)
        }
    });
    let positives: Vec<usize> = (0..idx.len()).filter(|&k| scores[idx[k]].1).collect();
    if positives.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for &k in &positives {
        let above = positives.iter().filter(|&&j| j <= k).count();
        total += above as f64 / (k + 1) as f64;
    }
    Some(total / positives.len() as f64)
}

#[test]
fn ap_examples() {
    assert_eq!(average_precision(&[true, false]), Some(1.0));
    assert_eq!(average_precision(&[false, true]), Some(0.5));
    assert_eq!(average_precision(&[false, false]), None);
}

#[test]
fn ap_matches_brute_force() {
    let v = names(20);
    let mut rng = rng_from_seed(3);
    for _ in 0..100 {
        let mut scores: Vec<PairScore> = (0..20)
            .map(|i| pair(i, (i + 1) % 20, rng.gen_bool(0.4), (rng.gen_range(0..6) as f64) / 5.0))
            .collect();
        let raw: Vec<(f64, bool, String)> = scores
            .iter()
            .map(|s| (s.score, s.label, format!("{}\t{}", v.entity_name(s.head), v.entity_name(s.tail))))
            .collect();
        rank_pairs(&mut scores, &v);
        let labels: Vec<bool> = scores.iter().map(|s| s.label).collect();
        assert_eq!(average_precision(&labels), brute_ap(&raw));
    }
}

#[test]
fn map_excludes_relations_without_positives() {
    let v = names(4);
    let report = mean_average_precision(
        vec![
            ("a".into(), vec![pair(0, 1, true, 0.9), pair(1, 2, false, 0.5)]),
            ("b".into(), vec![pair(0, 1, false, 0.9), pair(1, 2, true, 0.5)]),
            ("c".into(), vec![pair(0, 1, false, 0.9)]),
        ],
        &v,
    );
    assert_eq!(report.map, 0.75);
    assert_eq!(report.excluded().count(), 1);
    assert_eq!(report.per_relation[0].n_pos, 1);
}

#[test]
fn ties_break_on_names() {
    let v = names(4);
    let mut s = vec![pair(2, 0, true, 0.5), pair(1, 3, false, 0.5), pair(0, 0, false, f64::NEG_INFINITY)];
    rank_pairs(&mut s, &v);
    assert_eq!(s.iter().map(|p| p.head.0).collect::<Vec<_>>(), vec![1, 2, 0]);
}

#[test]
fn prediction_loss_examples() {
    let q = [1.0];
    let l = prediction_loss(&[vec![0.3]], &[vec![0.6]], &q, 0.5, Similarity::Dot).unwrap();
    assert!((l - 0.8).abs() < 1e-15);
    let l = prediction_loss(&[vec![2.0], vec![1.9]], &[vec![0.1], vec![-1.0]], &q, 0.5, Similarity::Dot).unwrap();
    assert_eq!(l, 0.0);

    let mut rng = rng_from_seed(2);
    for _ in 0..50 {
        let pos: Vec<Vec<f64>> = (0..2).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let neg: Vec<Vec<f64>> = (0..2).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let got = prediction_loss(&pos, &neg, &q, 0.5, Similarity::Dot).unwrap();
        let mut want = 0.0;
        for j in &neg {
            for i in &pos {
                want += f64::max(0.0, 0.5 + j[0] - i[0]);
            }
        }
        assert!((got - want).abs() < 1e-15);
    }
}

fn small_model(seed: u64) -> KbcModel {
    let rop = RopConfig::new(Arch::Arc3, Composition::EGru, 4);
    KbcModel::new(KbcConfig::new(rop), 6, 4, 2, &mut rng_from_seed(seed)).unwrap()
}

fn example(paths: Vec<Vec<u32>>, label: bool) -> KbcExample {
    KbcExample {
        head: EntityId(0),
        tail: EntityId(1),
        label,
        paths: paths
            .into_iter()
            .map(|r| PathInstance::base(EntityId(0), r.into_iter().map(RelationId).collect(), EntityId(1)).unwrap())
            .collect(),
    }
}

#[test]
fn encoder_closed_forms() {
    let m = small_model(0);
    let zero = GruParams::zeros(4, 4);
    let h = encode_relation_seq(&zero, &m.rop.relations, &[RelationId(0), RelationId(2)]).unwrap();
    assert_eq!(h, vec![0.0; 4]);
    let one = m.encode(&[RelationId(3)]).unwrap();
    let step = crate::numerics::gru_step(&m.gru_r, &[0.0; 4], m.rop.relations.value.row(3)).unwrap();
    assert_eq!(one, step);
    let three = m.encode(&[RelationId(3), RelationId(1), RelationId(0)]).unwrap();
    let mut h = vec![0.0; 4];
    for r in [3, 1, 0] {
        h = crate::numerics::gru_step(&m.gru_r, &h, m.rop.relations.value.row(r)).unwrap();
    }
    assert_eq!(three, h);
    assert_eq!(m.encode(&[]).unwrap_err(), Error::EmptySequence);
}

#[test]
fn score_is_max_over_paths() {
    let m = small_model(1);
    let ex = example(vec![vec![0], vec![1, 2], vec![3, 3, 1], vec![2], vec![0, 1]], true);
    let per_path = m.path_scores(&ex, 1).unwrap();
    let brute = per_path.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(m.score_pair(&ex, 1).unwrap().score, brute);

    let single = example(vec![vec![2, 1]], true);
    assert_eq!(m.score_pair(&single, 0).unwrap().score, m.path_scores(&single, 0).unwrap()[0]);

    let empty = example(vec![], false);
    assert_eq!(m.score_pair(&empty, 0).unwrap().score, f64::NEG_INFINITY);

    // permutation invariance and monotonicity under adding paths
    let mut rev = ex.clone();
    rev.paths.reverse();
    assert_eq!(m.score_pair(&rev, 1).unwrap().score, brute);
    let mut more = ex.clone();
    more.paths.push(PathInstance::base(EntityId(0), vec![RelationId(1)], EntityId(1)).unwrap());
    assert!(m.score_pair(&more, 1).unwrap().score >= brute);
}

#[test]
fn aggregation_pools() {
    assert_eq!(Aggregation::Max.pool(&[0.2, 0.7]), 0.7);
    assert!((Aggregation::Mean.pool(&[0.2, 0.7]) - 0.45).abs() < 1e-15);
    let lse = Aggregation::LogSumExp.pool(&[0.0, 0.0]);
    assert!((lse - libm::log(2.0)).abs() < 1e-15);
}

#[test]
fn add_composition_rejected_for_sequence_loss() {
    let mut c = KbcConfig::new(RopConfig::new(Arch::Arc2, Composition::Add, 4));
    assert!(c.validate().is_err());
    c.seq_weight = 0.0;
    assert!(c.validate().is_ok());
}

#[test]
fn combined_gradient_matches_finite_differences() {
    for (arch, comp) in KBC_VARIANTS {
        for seed in 0..3 {
            let r = check_kbc_case(arch, comp, 5, seed, false).unwrap();
            assert_eq!(r.report.unexplained().count(), 0, "{}: {:?}", r.name, r.report.failing);
            assert!(r.report.max_rel_err < 1e-2);
        }
    }
}

#[test]
fn zero_prediction_weight_is_pure_sequence_loss() {
    let mut m = small_model(5);
    m.config.pred_weight = 0.0;
    let ex = [example(vec![vec![0, 1], vec![2]], true), example(vec![vec![3]], false)];
    let batch: Vec<BatchItem<'_>> = ex.iter().map(|e| BatchItem { query: 0, example: e }).collect();
    let targets = m.sample_targets(&batch, &mut rng_from_seed(1));
    let loss = m.batch_loss(&batch, &targets).unwrap();
    let mut seq = 0.0;
    for (item, t) in batch.iter().zip(&targets) {
        for (p, tt) in item.example.paths.iter().zip(t) {
            seq += m.rop.path_loss(p.head, &p.relations, tt).unwrap();
        }
    }
    assert_eq!(loss.total(&m.config), seq);
}

#[test]
fn frozen_rop_branch_trains_prediction_loss_only() {
    let mut m = small_model(6);
    m.config.seq_weight = 0.0;
    let ex = [example(vec![vec![0, 1], vec![2]], true), example(vec![vec![3], vec![1]], false)];
    let batch: Vec<BatchItem<'_>> = ex.iter().map(|e| BatchItem { query: 1, example: e }).collect();
    let targets = m.sample_targets(&batch, &mut rng_from_seed(1));
    assert!(targets.iter().flatten().all(|t| t.is_empty()));
    let before_cells = m.rop.encoder.clone();
    let mut rows = TouchedRows::default();
    let loss = m.accumulate_batch_grad(&batch, &targets, &mut rows).unwrap();
    let standalone = {
        let enc = |e: &KbcExample| -> Vec<Vec<f64>> { e.paths.iter().map(|p| m.encode(&p.relations).unwrap()).collect() };
        prediction_loss(&enc(&ex[0]), &enc(&ex[1]), m.queries.value.row(1), 0.5, Similarity::Cosine).unwrap()
    };
    assert_eq!(loss.seq, 0.0);
    assert_eq!(loss.pred, standalone);
    assert!(m.rop.encoder.params().iter().all(|(_, p)| p.grad.data().iter().all(|&g| g == 0.0)));
    m.apply_update(&rows, &[1], 0.1, 1e-8);
    assert_eq!(m.rop.encoder, before_cells);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let mut m = small_model(8);
    let before = m.clone();
    let data = KbcDataset {
        queries: vec!["q".into()],
        splits: vec![KbcSplit {
            train: vec![example(vec![vec![0, 1]], true), example(vec![vec![2]], false)],
            ..Default::default()
        }],
    };
    let cfg = KbcTrainConfig {
        lr: 0.0,
        ..Default::default()
    };
    let stats = train_kbc_epoch(&mut m, &data, &cfg, &mut rng_from_seed(0)).unwrap();
    assert!(stats.total >= 0.0);
    let values = |m: &KbcModel| {
        let mut v = Vec::new();
        m.visit_params(&mut |_, p| v.extend_from_slice(p.value.data()));
        v
    };
    assert_eq!(values(&m), values(&before));
}
