use rop::checkpoint::{Checkpoint, Model};
use rop::config::RunConfig;
use rop::error::AppError;
use rop_core::kbc::KbcModel;
use rop_core::{rng_from_seed, Parameterized, RopModel, Vocab};

fn values<M: Parameterized>(m: &M) -> Vec<(String, Vec<u64>)> {
    let mut out = Vec::new();
    m.visit_params(&mut |n, p| out.push((n.to_string(), p.value.data().iter().map(|x| x.to_bits()).collect())));
    out
}

fn vocab() -> Vocab {
    Vocab::from_tokens(["a", "b", "c"], ["r", "*r"]).unwrap()
}

#[test]
fn pqa_round_trip_is_bit_identical() {
    for (arch, comp) in [("arc1", "none"), ("arc2", "add"), ("arc2", "gru"), ("arc3", "add"), ("arc3", "egru")] {
        // Only ARC2-GRU allows a distinct hidden size.
        let d_h = if comp == "gru" { 3 } else { 4 };
        let spec = RunConfig::parse(&format!("arch = {arch}\ncomp = {comp}\ndim = 4\nd_h = {d_h}\n"))
            .unwrap()
            .resolve()
            .unwrap()
            .model;
        let m = RopModel::new(spec.rop_config().unwrap(), 3, 2, &mut rng_from_seed(5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        Checkpoint::of_pqa(&spec, &m, &vocab(), 7).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.epoch, 7);
        assert_eq!(back.vocab().unwrap(), vocab());
        let Model::Pqa(m2) = back.model().unwrap() else { panic!() };
        assert_eq!(values(&*m2), values(&m));
    }
}

#[test]
fn kbc_round_trip_is_bit_identical() {
    let spec = RunConfig::parse("task = kbc\ndim = 3\n").unwrap().resolve().unwrap().model;
    let m = KbcModel::new(spec.kbc_config().unwrap(), 3, 2, 2, &mut rng_from_seed(1)).unwrap();
    let c = Checkpoint::of_kbc(&spec, &m, &vocab(), &["q1".into(), "q2".into()], 0);
    let back: Checkpoint = serde_json::from_str(&c.to_json().unwrap()).unwrap();
    let Model::Kbc(m2) = back.model().unwrap() else { panic!() };
    assert_eq!(values(&*m2), values(&m));
}

#[test]
fn mismatches_are_rejected() {
    let spec = RunConfig::parse("dim = 4\n").unwrap().resolve().unwrap().model;
    let m = RopModel::new(spec.rop_config().unwrap(), 3, 2, &mut rng_from_seed(5)).unwrap();
    let c = Checkpoint::of_pqa(&spec, &m, &vocab(), 0);

    let other = RunConfig::parse("dim = 5\n").unwrap().resolve().unwrap().model;
    assert!(matches!(c.check_spec(&other), Err(AppError::Usage(_))));
    assert!(c.check_spec(&spec).is_ok());

    let mut shrunk = c.clone();
    shrunk.entities.pop();
    assert!(matches!(shrunk.model(), Err(AppError::Data(_))));

    let mut missing = c.clone();
    missing.tensors.pop();
    assert!(matches!(missing.model(), Err(AppError::Data(_))));
}
