mod support {
    pub mod panel;
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rpad_core::agreement::{
    averaged_relative, cohen_kappa, kappa_from_labels, optimistic_relative, pairwise,
    pairwise_precision, pairwise_recall, pairwise_table, relative_report, rpad, rrad,
    AgreementError, CategoryModel, ConstMatcher, DecisionMatrix, ExactMatcher, MatchFn, Metric,
    MetricConfig, ShortBagPolicy, Symmetrize, VarianceReport,
};
use support::panel::{engine_vs_oracle, random_panel, to_dataset, RawPanel};

fn panel(bags: Vec<Vec<Vec<&str>>>) -> RawPanel {
    let z = bags.len() - 1;
    let n = bags[0].len();
    RawPanel {
        n,
        z,
        bags: bags
            .into_iter()
            .map(|r| r.into_iter().map(|b| b.into_iter().map(String::from).collect()).collect())
            .collect(),
        bits: Default::default(),
    }
}

fn cfg(k: usize) -> MetricConfig {
    MetricConfig::default().with_k(k)
}

#[test]
fn precision_example_n2_k2() {
    // case 1: one matching pair; case 2: none
    let p = panel(vec![
        vec![vec!["a", "b"], vec!["c", "d"]],
        vec![vec!["a", "x"], vec!["y", "z"]],
        vec![vec!["a", "b"], vec!["c", "d"]],
        vec![vec!["q", "a"], vec!["r", "s"]],
    ]);
    let ds = to_dataset(&p);
    assert_eq!(pairwise_precision(&ds, 3, 0, &ExactMatcher, &cfg(2)).unwrap(), 1.0 / 8.0);
    assert_eq!(pairwise_recall(&ds, 3, 0, &ExactMatcher, &cfg(2)).unwrap(), 0.5);
}

#[test]
fn identical_two_item_bags_give_half() {
    let b = || vec![vec!["a", "b"], vec!["c", "d"]];
    let ds = to_dataset(&panel(vec![b(), b(), b(), b()]));
    assert_eq!(pairwise_precision(&ds, 0, 1, &ExactMatcher, &cfg(2)).unwrap(), 0.5);
    assert_eq!(pairwise_recall(&ds, 0, 1, &ExactMatcher, &cfg(2)).unwrap(), 1.0);
    assert_eq!(pairwise_precision(&ds, 0, 1, &ConstMatcher(true), &cfg(2)).unwrap(), 1.0);
    assert_eq!(pairwise_recall(&ds, 0, 1, &ConstMatcher(false), &cfg(2)).unwrap(), 0.0);
}

#[test]
fn recall_three_of_four() {
    let e = vec![vec!["a"], vec!["b"], vec!["c"], vec!["d"]];
    let a = vec![vec!["a"], vec!["b"], vec!["c"], vec!["x"]];
    let ds = to_dataset(&panel(vec![e.clone(), e.clone(), a]));
    assert_eq!(pairwise_recall(&ds, 2, 0, &ExactMatcher, &cfg(1)).unwrap(), 0.75);
}

/// Panel with max P_AE = 0.25 and min P_EE = 0.125 at k = 2, n = 2.
fn hand_panel() -> RawPanel {
    panel(vec![
        // experts e0, e1, e2
        vec![vec!["a", "b"], vec!["c", "d"]],
        vec![vec!["a", "b"], vec!["c", "x"]],
        vec![vec!["a", "y"], vec!["w", "v"]],
        // algorithm
        vec![vec!["a", "b"], vec!["u", "t"]],
    ])
}

#[test]
fn hand_panel_brute_force() {
    let ds = to_dataset(&hand_panel());
    let t = pairwise_table(&ds, &ExactMatcher, &cfg(2)).unwrap();
    // AE: (a,e0) mu 2+0, (a,e1) 2+0, (a,e2) 1+0 -> /8
    assert_eq!(t.ae_values(Metric::Precision), vec![0.25, 0.25, 0.125]);
    // EE: (e0,e1) 2+1, (e0,e2) 1+0, (e1,e2) 1+0
    assert_eq!(t.ee_values(Metric::Precision), vec![0.375, 0.125, 0.125]);
    let (p_opt, r_opt) = optimistic_relative(&ds, &ExactMatcher, &cfg(2)).unwrap();
    assert_eq!(p_opt, 2.0);
    // recall: AE 0.5, 0.5, 0.5; EE 1.0, 0.5, 0.5
    assert_eq!(r_opt, 1.0);
    let (p_avg, r_avg) = averaged_relative(&ds, &ExactMatcher, &cfg(2)).unwrap();
    let want_p = (0.625 / 3.0) / (0.625 / 3.0);
    assert!((p_avg - want_p).abs() < 1e-12);
    assert!((r_avg - 0.5 / (2.0 / 3.0)).abs() < 1e-12);
    let h = 0.5;
    let got = rpad(&ds, &ExactMatcher, &cfg(2).with_hardness(h)).unwrap();
    let want = (0.5 * 0.25 + 0.5 * (0.625 / 3.0)) / (0.5 * 0.125 + 0.5 * (0.625 / 3.0));
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn blend_endpoints_equal_opt_and_avg_bit_exactly() {
    let ds = to_dataset(&hand_panel());
    let (p_opt, r_opt) = optimistic_relative(&ds, &ExactMatcher, &cfg(2)).unwrap();
    let (p_avg, r_avg) = averaged_relative(&ds, &ExactMatcher, &cfg(2)).unwrap();
    let at = |h: f64| {
        let c = cfg(2).with_hardness(h);
        (rpad(&ds, &ExactMatcher, &c).unwrap(), rrad(&ds, &ExactMatcher, &c).unwrap())
    };
    assert_eq!(at(0.0).0.to_bits(), p_opt.to_bits());
    assert_eq!(at(0.0).1.to_bits(), r_opt.to_bits());
    assert_eq!(at(1.0).0.to_bits(), p_avg.to_bits());
    assert_eq!(at(1.0).1.to_bits(), r_avg.to_bits());
}

#[test]
fn clone_expert_panel_is_neutral() {
    let e = vec![vec!["a", "b", "c"], vec!["d", "e", "f"], vec!["g", "h", "i"]];
    let ds = to_dataset(&panel(vec![e.clone(), e.clone(), e.clone(), e]));
    for k in 1..=3 {
        let (t, r) = relative_report(&ds, &ExactMatcher, &cfg(k).with_hardness(0.3)).unwrap();
        for v in [&r.p_opt, &r.r_opt, &r.p_avg, &r.r_avg, &r.rpad, &r.rrad] {
            assert_eq!(v.value, Some(1.0));
            assert_eq!(v.flag, "-");
        }
        let var = VarianceReport::from_tables(&t, None);
        assert_eq!(var.sigma_algo_precision, Some(0.0));
        assert_eq!(var.sigma_algo_recall, Some(0.0));
        assert_eq!(var.sigma_expert_precision, Some(0.0));
        assert_eq!(var.sigma_expert_recall, Some(0.0));
    }
}

#[test]
fn disjoint_experts_are_degenerate() {
    let ds = to_dataset(&panel(vec![
        vec![vec!["a"]],
        vec![vec!["b"]],
        vec![vec!["c"]],
        vec![vec!["a"]],
    ]));
    assert!(matches!(
        optimistic_relative(&ds, &ExactMatcher, &cfg(1)),
        Err(AgreementError::DegenerateDenominator { .. })
    ));
    let (_, r) = relative_report(&ds, &ExactMatcher, &cfg(1)).unwrap();
    assert!(r.has_degenerate());
    assert_eq!(r.p_avg.flag, "n/a");
}

#[test]
fn algorithm_matching_nothing_is_zero() {
    let e = vec![vec!["a"], vec!["b"]];
    let ds = to_dataset(&panel(vec![e.clone(), e.clone(), e, vec![vec!["x"], vec!["y"]]]));
    let (p_avg, r_avg) = averaged_relative(&ds, &ExactMatcher, &cfg(1)).unwrap();
    assert_eq!((p_avg, r_avg), (0.0, 0.0));
}

#[test]
fn strict_short_bag_names_case() {
    let ds = to_dataset(&panel(vec![
        vec![vec!["a", "b", "c"], vec!["a", "b"]],
        vec![vec!["a", "b", "c"], vec!["a", "b", "c"]],
        vec![vec!["a", "b", "c"], vec!["a", "b", "c"]],
    ]));
    let err = pairwise(&ds, 0, 1, &ExactMatcher, &cfg(3)).unwrap_err();
    assert_eq!(
        err,
        AgreementError::ShortBag {
            case_id: Some("case1".into()),
            rater_id: Some("e0".into()),
            len: 2,
            k: 3
        }
    );
    assert!(err.to_string().contains("case case1"));
    let pen = MetricConfig {
        short_bag_policy: ShortBagPolicy::Penalize,
        ..cfg(3)
    };
    // 3 + 2 matches over 2 * 9
    assert_eq!(pairwise_precision(&ds, 0, 1, &ExactMatcher, &pen).unwrap(), 5.0 / 18.0);
}

#[test]
fn rank_one_matches_only_keep_recall_flat_in_k() {
    // matches only at rank 1: R@k is the same for every k under penalize
    let e = |t: &'static str| vec![vec![t, "e-x", "e-y"], vec![t, "e-z", "e-w"]];
    let ds = to_dataset(&panel(vec![
        e("a"),
        e("a"),
        e("a"),
        vec![vec!["a", "p", "q"], vec!["a", "r", "s"]],
    ]));
    let pen = |k| MetricConfig {
        short_bag_policy: ShortBagPolicy::Penalize,
        ..cfg(k)
    };
    let r: Vec<f64> = (1..=3).map(|k| rrad(&ds, &ExactMatcher, &pen(k)).unwrap()).collect();
    assert_eq!(r, vec![1.0, 1.0, 1.0]);
}

#[test]
fn too_few_experts_for_expert_sigma() {
    let e = vec![vec!["a"], vec!["b"]];
    let ds = to_dataset(&panel(vec![e.clone(), e.clone(), e]));
    let t = pairwise_table(&ds, &ExactMatcher, &cfg(1)).unwrap();
    let var = VarianceReport::from_tables(&t, None);
    assert!(var.sigma_algo_precision.is_some());
    assert_eq!(var.sigma_expert_precision, None);
}

#[test]
fn kappa_on_dataset() {
    let ds = to_dataset(&panel(vec![
        vec![vec!["a"], vec!["b"], vec!["a"], vec!["b"]],
        vec![vec!["a"], vec!["b"], vec!["a"], vec!["b"]],
        vec![vec!["flu"], vec!["flu"], vec!["cold"], vec!["cold"]],
    ]));
    let v = cohen_kappa(&ds, 0, 1, CategoryModel::Exact, &ExactMatcher, Symmetrize::AsIs).unwrap();
    assert_eq!(v.kappa, 1.0);
}

#[test]
fn match_clustered_kappa_merges_synonyms() {
    let ds = to_dataset(&panel(vec![
        vec![vec!["mi"], vec!["flu"], vec!["mi"], vec!["flu"]],
        vec![vec!["heart attack"], vec!["flu"], vec!["heart attack"], vec!["flu"]],
        vec![vec!["mi"], vec!["flu"], vec!["mi"], vec!["flu"]],
    ]));
    let syn = |a: &str, b: &str| a == b || (a == "mi" && b == "heart attack");
    let exact = cohen_kappa(&ds, 0, 1, CategoryModel::Exact, &syn, Symmetrize::AsIs).unwrap();
    let clustered = cohen_kappa(&ds, 0, 1, CategoryModel::MatchClustered, &syn, Symmetrize::AsIs).unwrap();
    assert!(exact.kappa < 1.0);
    assert_eq!(clustered.kappa, 1.0);
}

#[test]
fn independent_uniform_labels_kappa_near_zero() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let x: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
    let y: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
    let v = kappa_from_labels(&x, &y).unwrap();
    assert!((-0.1..=0.1).contains(&v.kappa), "{}", v.kappa);
}

#[test]
fn decision_matrix_replays_matcher() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for sym in [Symmetrize::AsIs, Symmetrize::Or, Symmetrize::And] {
        let p = random_panel(&mut rng, true, false);
        let ds = to_dataset(&p);
        let m = |a: &str, b: &str| p.m(a, b);
        let c = MetricConfig {
            symmetrize: sym,
            ..cfg(3)
        };
        let dm = DecisionMatrix::compute(&ds, &m, 3, sym).unwrap();
        dm.check_coverage(&ds, 3, sym).unwrap();
        let direct = pairwise_table(&ds, &m, &c).unwrap();
        let replay = pairwise_table(&ds, &dm as &dyn MatchFn, &c).unwrap();
        assert_eq!(direct, replay);
    }
}

#[test]
fn decision_matrix_coverage_gap() {
    let p = hand_panel();
    let ds = to_dataset(&p);
    let dm = DecisionMatrix::compute(&ds, &ExactMatcher, 1, Symmetrize::AsIs).unwrap();
    dm.check_coverage(&ds, 1, Symmetrize::AsIs).unwrap();
    assert!(matches!(
        dm.check_coverage(&ds, 2, Symmetrize::AsIs),
        Err(AgreementError::MissingDecision { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn engine_matches_brute_force(seed in any::<u64>(), k in 1usize..=3, h in 0.0f64..=1.0,
                                  sym in 0usize..3, full in any::<bool>(), symmetric in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_panel(&mut rng, full, symmetric);
        let sym = [Symmetrize::AsIs, Symmetrize::Or, Symmetrize::And][sym];
        for strict in [true, false] {
            let r = engine_vs_oracle(&p, k, h, sym, strict);
            prop_assert!(r.is_ok(), "{:?}", r);
        }
    }

    #[test]
    fn values_bounded_and_symmetric(seed in any::<u64>(), k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_panel(&mut rng, true, true);
        let ds = to_dataset(&p);
        let m = |a: &str, b: &str| p.m(a, b);
        let t = pairwise_table(&ds, &m, &cfg(k)).unwrap();
        for r in &t.rows {
            prop_assert!((0.0..=1.0).contains(&r.precision) && (0.0..=1.0).contains(&r.recall));
        }
        prop_assert_eq!(t.rows.len(), p.z + p.z * (p.z - 1) / 2);
        let xy = pairwise(&ds, 0, 1, &m, &cfg(k)).unwrap();
        let yx = pairwise(&ds, 1, 0, &m, &cfg(k)).unwrap();
        prop_assert_eq!(xy, yx);
    }

    #[test]
    fn recall_non_decreasing_in_k(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_panel(&mut rng, false, false);
        let ds = to_dataset(&p);
        let m = |a: &str, b: &str| p.m(a, b);
        let pen = |k| MetricConfig { short_bag_policy: ShortBagPolicy::Penalize, ..cfg(k) };
        let r: Vec<f64> = (1..=3).map(|k| pairwise_recall(&ds, 3, 0, &m, &pen(k)).unwrap()).collect();
        prop_assert!(r[0] <= r[1] && r[1] <= r[2]);
    }

    #[test]
    fn adding_a_match_never_lowers_precision(seed in any::<u64>(), k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_panel(&mut rng, true, false);
        let ds = to_dataset(&p);
        let before = |a: &str, b: &str| p.m(a, b);
        let x = ds.bag(3 % (p.z + 1), 0).items()[0].text().to_owned();
        let y = ds.bag(0, 0).items()[0].text().to_owned();
        let after = |a: &str, b: &str| p.m(a, b) || (a == x && b == y);
        let pb = pairwise_precision(&ds, 3 % (p.z + 1), 0, &before, &cfg(k)).unwrap();
        let pa = pairwise_precision(&ds, 3 % (p.z + 1), 0, &after, &cfg(k)).unwrap();
        prop_assert!(pa >= pb);
    }
}
