use rop_core::verify::{check_kbc_case, check_rop_case, run_suite, KBC_VARIANTS, ROP_VARIANTS};

#[test]
fn suite_has_no_unexplained_mismatch() {
    let cases = run_suite(5, 3, false).unwrap();
    assert_eq!(cases.len(), 3 * (ROP_VARIANTS.len() * 3 + KBC_VARIANTS.len()));
    for c in &cases {
        assert_eq!(c.report.unexplained().count(), 0, "{} seed {}: {:?}", c.name, c.seed, c.report.failing);
        assert!(c.report.max_rel_err < 1e-2, "{} seed {}", c.name, c.seed);
    }
}

#[test]
fn every_case_catches_a_corrupted_gradient() {
    for (arch, comp) in ROP_VARIANTS {
        let c = check_rop_case(arch, comp, 2, 5, 17, true).unwrap();
        assert!(c.report.unexplained().count() > 0, "{}", c.name);
    }
    for (arch, comp) in KBC_VARIANTS {
        let c = check_kbc_case(arch, comp, 5, 17, true).unwrap();
        assert!(c.report.unexplained().count() > 0, "{}", c.name);
    }
}

#[test]
fn cases_are_reproducible() {
    let a = check_kbc_case(KBC_VARIANTS[2].0, KBC_VARIANTS[2].1, 4, 3, false).unwrap();
    let b = check_kbc_case(KBC_VARIANTS[2].0, KBC_VARIANTS[2].1, 4, 3, false).unwrap();
    assert_eq!(a, b);
}
