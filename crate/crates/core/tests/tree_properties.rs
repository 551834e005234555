use gt_core::tree::{run_fusion_tree, run_multi_tree, run_single_tree, MAX_STAGES_GUARD};
use gt_core::{
    analyze, priors_from_risks, AnalysisConfig, AnalysisReport, Error, ResponseModel, Scheme,
    Thresholds,
};
use proptest::prelude::*;

fn config_strategy(max_n: usize, max_stages: usize) -> impl Strategy<Value = AnalysisConfig> {
    (
        prop::collection::vec(0.02f64..0.45, 1..=max_n),
        1..=max_stages,
        prop::option::of((0.7f64..=1.0, 0.85f64..=1.0, 0.0f64..2.0)),
        0.01f64..0.2,
    )
        .prop_map(|(risks, stages, noise, eps)| {
            let mut config = AnalysisConfig::new(priors_from_risks(&risks), Scheme::Single, stages);
            if let Some((se, sp, d)) = noise {
                config.model = ResponseModel::new(se, sp, d).unwrap();
            }
            config.thresholds = Thresholds::new(eps, eps).unwrap();
            config
        })
}

fn assert_close(a: &AnalysisReport, b: &AnalysisReport, tol: f64) {
    let pairs = [
        (a.expected_tests, b.expected_tests),
        (a.decisive_rate, b.decisive_rate),
        (a.aggregate_fn_mass, b.aggregate_fn_mass),
        (a.aggregate_fp_mass, b.aggregate_fp_mass),
    ];
    for (x, y) in pairs {
        assert!((x - y).abs() <= tol, "{x} vs {y}\n{a:#?}\n{b:#?}");
    }
    for (x, y) in a.per_subject.iter().zip(&b.per_subject) {
        assert!((x.fn_mass - y.fn_mass).abs() <= tol);
        assert!((x.fp_mass - y.fp_mass).abs() <= tol);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn schemes_agree_without_pruning(mut config in config_strategy(4, 6)) {
        let single = run_single_tree(&config, 1).unwrap();
        config.scheme = Scheme::Multi;
        let multi = run_multi_tree(&config, 2).unwrap();
        config.scheme = Scheme::Fusion;
        let fusion = run_fusion_tree(&config, 1).unwrap();
        assert_close(&multi, &single, 1e-9);
        prop_assert_eq!(fusion.expected_tests.to_bits(), single.expected_tests.to_bits());
        prop_assert_eq!(fusion.per_subject, single.per_subject.clone());
    }

    #[test]
    fn report_invariants(config in config_strategy(5, 8)) {
        let r = run_single_tree(&config, 1).unwrap();
        prop_assert!(r.max_weight_drift <= 1e-9);
        prop_assert!(r.max_tree_branches <= 1 << config.max_stages);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r.decisive_rate));
        prop_assert!(r.expected_tests <= config.max_stages as f64 + 1e-12);
        for s in &r.per_subject {
            prop_assert!(s.fn_mass <= s.risk + 1e-12);
            prop_assert!(s.fp_mass <= 1.0 - s.risk + 1e-12);
        }
        prop_assert!((r.accounted_mass + r.pruned_mass - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn noiseless_commits_are_error_free(
        risks in prop::collection::vec(0.02f64..0.45, 1..=5),
        stages in 1usize..=8,
    ) {
        for scheme in [Scheme::Single, Scheme::Multi] {
            let config = AnalysisConfig::new(priors_from_risks(&risks), scheme, stages);
            let r = analyze(&config, 1).unwrap();
            prop_assert_eq!(r.aggregate_fn_mass, 0.0);
            prop_assert_eq!(r.aggregate_fp_mass, 0.0);
        }
    }

    #[test]
    fn decisive_rate_grows_with_depth(config in config_strategy(4, 1)) {
        let mut last = 0.0;
        for stages in [2, 4, 6, 8] {
            let mut c = config.clone();
            c.max_stages = stages;
            let rate = run_single_tree(&c, 1).unwrap().decisive_rate;
            prop_assert!(rate >= last - 1e-12);
            last = rate;
        }
    }

    #[test]
    fn pruned_mass_is_bounded(mut config in config_strategy(5, 10), theta in 1e-8f64..1e-3) {
        config.scheme = Scheme::Fusion;
        config.prune_threshold = theta;
        let r = run_fusion_tree(&config, 1).unwrap();
        prop_assert!(r.pruned_mass <= theta * r.branches_pruned as f64 + 1e-12);
        prop_assert!(r.accounted_mass >= 1.0 - theta * r.branches_pruned as f64 - 1e-9);
        prop_assert!(r.max_tree_branches <= 1 << config.max_stages);
    }
}

#[test]
fn one_subject_every_scheme() {
    for scheme in [Scheme::Single, Scheme::Multi, Scheme::Fusion] {
        let mut config = AnalysisConfig::new(priors_from_risks(&[0.3]), scheme, 2);
        config.thresholds = Thresholds::new(0.01, 0.01).unwrap();
        let r = analyze(&config, 1).unwrap();
        assert_eq!(r.expected_tests, 1.0, "{scheme:?}");
        assert_eq!(r.decisive_rate, 1.0);
        assert_eq!(r.aggregate_fn_mass, 0.0);
    }
}

#[test]
fn diluted_false_negative_mass() {
    let mut config = AnalysisConfig::new(priors_from_risks(&[0.3]), Scheme::Single, 2);
    config.model = ResponseModel::new(0.8, 1.0, 0.0).unwrap();
    config.thresholds = Thresholds::new(0.05, 0.05).unwrap();
    for scheme in [Scheme::Single, Scheme::Multi] {
        config.scheme = scheme;
        let r = analyze(&config, 1).unwrap();
        assert!(
            (r.per_subject[0].fn_mass - 0.012).abs() < 1e-12,
            "{scheme:?}"
        );
        assert_eq!(r.per_subject[0].fp_mass, 0.0);
        assert!((r.per_subject[0].fn_rate - 0.04).abs() < 1e-12);
    }
}

#[test]
fn fusion_prunes_rare_branches_at_small_cost() {
    let mut config = AnalysisConfig::new(priors_from_risks(&[0.05; 4]), Scheme::Single, 10);
    config.model = ResponseModel::new(0.9, 1.0, 0.0).unwrap();
    let single = run_single_tree(&config, 0).unwrap();
    config.scheme = Scheme::Fusion;
    config.prune_threshold = 1e-6;
    let fusion = run_fusion_tree(&config, 0).unwrap();
    assert!(fusion.branches_pruned > single.branches_pruned);
    assert!(fusion.nodes_expanded < single.nodes_expanded);
    // a pruned subtree would have contributed between 0 and max_stages tests per unit mass
    let shift = (fusion.expected_tests - single.expected_tests).abs();
    assert!(shift <= fusion.pruned_mass * config.max_stages as f64 + 1e-12);
    assert!(fusion.pruned_mass <= 1e-6 * fusion.branches_pruned as f64);
}

#[test]
fn noiseless_pair_never_retests_a_committed_subject() {
    let config = AnalysisConfig::new(priors_from_risks(&[0.5, 0.5]), Scheme::Fusion, 4);
    let r = run_fusion_tree(&config, 1).unwrap();
    // each reading commits one subject, so no contradictory branch is ever built
    assert_eq!(r.branches_pruned, 0);
    assert_eq!(r.expected_tests, 2.0);
    assert_eq!(r.decisive_rate, 1.0);
    assert_eq!(r.branches_terminal, 4);
}

#[test]
fn symmetry_uses_one_tree_per_positive_count() {
    let mut config = AnalysisConfig::new(priors_from_risks(&[0.1; 5]), Scheme::Multi, 6);
    config.symmetry = true;
    let r = run_multi_tree(&config, 0).unwrap();
    assert_eq!(r.trees, 6);
    assert!(!r.per_subject_exact);
    let first = &r.per_subject[0];
    assert!(r.per_subject.iter().all(|s| s.fn_mass == first.fn_mass));
}

#[test]
fn tradeoff_report_is_partial() {
    let mut config = AnalysisConfig::new(priors_from_risks(&[0.1; 3]), Scheme::Multi, 6);
    config.retained_prior_mass = 0.999;
    let r = run_multi_tree(&config, 0).unwrap();
    assert_eq!(r.trees, 7);
    assert!((r.retained_mass - 0.999).abs() < 1e-12);
    assert!((r.accounted_mass - 0.999).abs() < 1e-12);
}

#[test]
fn guards() {
    let config = AnalysisConfig::new(
        priors_from_risks(&[0.1; 3]),
        Scheme::Single,
        MAX_STAGES_GUARD + 1,
    );
    let err = analyze(&config, 1).unwrap_err();
    assert!(err.is_scale_guard());

    let config = AnalysisConfig::new(priors_from_risks(&[0.1; 21]), Scheme::Multi, 2);
    assert!(analyze(&config, 1).unwrap_err().is_scale_guard());

    let mut config = AnalysisConfig::new(priors_from_risks(&[0.1, 0.2]), Scheme::Multi, 2);
    config.symmetry = true;
    assert_eq!(
        analyze(&config, 1).unwrap_err(),
        Error::SymmetryRequiresHomogeneousRisks
    );
}
