mod common;

use num::BigRational;
use proptest::prelude::*;
use weakinfo::market::{BinomialParams, BinomialPaths, PathSpace};
use weakinfo::measures::{
    binomial_transition_formula, martingale_defect, minimal_measure, minimal_measure_paths, radon_nikodym,
    risk_neutral_binomial, BinomialMeasure,
};
use weakinfo::scalar::parse_rational;
use weakinfo::Anticipation;

fn q(text: &str) -> BigRational {
    parse_rational(text).unwrap()
}

fn params(periods: usize) -> BinomialParams {
    BinomialParams::new(20.0, 0.09, 0.019, 0.032, periods, 200.0).unwrap()
}

#[test]
fn terminal_marginal_is_exact_in_floats() {
    let mut rng = common::rng(11);
    for _ in 0..100 {
        let p = common::random_binomial(&mut rng, 8);
        let nu = common::dirichlet(&mut rng, p.periods + 1);
        let minimal = minimal_measure(&risk_neutral_binomial(&p).unwrap(), &Anticipation::new(nu.clone()).unwrap()).unwrap();
        for (got, want) in minimal.terminal_distribution().iter().zip(&nu) {
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
    }
}

#[test]
fn transition_formula_matches_h_transform() {
    let mut rng = common::rng(12);
    for periods in 1..=8 {
        for _ in 0..100 {
            let p = common::random_binomial(&mut rng, 1);
            let p = BinomialParams { periods, ..p };
            let nu = Anticipation::new(common::dirichlet(&mut rng, periods + 1)).unwrap();
            let minimal = minimal_measure(&risk_neutral_binomial(&p).unwrap(), &nu).unwrap();
            for n in 0..periods {
                for i in 0..=n {
                    let (up, down) = binomial_transition_formula(periods, periods - n, i, &nu).unwrap();
                    assert!((up - minimal.up_probability(n, i)).abs() <= 1e-10);
                    assert!((down - minimal.down_probability(n, i)).abs() <= 1e-10);
                }
            }
        }
    }
}

#[test]
fn transition_formula_is_exact_in_rationals() {
    let nu = Anticipation::new(vec![q("1/4"), q("1/2"), q("1/8"), q("1/8")]).unwrap();
    let half = BinomialMeasure::constant(3, q("1/2")).unwrap();
    let minimal = minimal_measure(&half, &nu).unwrap();
    for n in 0..3 {
        for i in 0..=n {
            let (up, down) = binomial_transition_formula(3, 3 - n, i, &nu).unwrap();
            assert_eq!(&up, minimal.up_probability(n, i));
            assert_eq!(down, minimal.down_probability(n, i));
        }
    }
}

#[test]
fn density_is_terminal_measurable_exactly() {
    let nu = Anticipation::new(vec![q("1/10"), q("3/10"), q("2/5"), q("1/10"), q("1/10")]).unwrap();
    let space = BinomialPaths { periods: 4 };
    for up in ["1/2", "3/7", "51/109"] {
        let tilde = BinomialMeasure::constant(4, q(up)).unwrap().to_path_measure();
        let minimal = minimal_measure_paths(&space, &tilde, &nu).unwrap();
        let density = radon_nikodym(&space, &minimal, &tilde).unwrap();
        assert!(density.is_terminal_measurable());
        assert_eq!(density.expectation_under(&tilde), q("1"));
        assert_eq!(minimal.terminal_distribution(&space), nu.weights());
    }
}

#[test]
fn path_and_tree_constructions_agree() {
    let p = params(5);
    let tilde = risk_neutral_binomial(&p).unwrap();
    let nu = Anticipation::new(vec![0.05, 0.1, 0.4, 0.25, 0.15, 0.05]).unwrap();
    let space = BinomialPaths { periods: 5 };
    let tree = minimal_measure(&tilde, &nu).unwrap();
    let paths = minimal_measure_paths(&space, &tilde.to_path_measure(), &nu).unwrap();
    for path in 0..space.path_count() {
        assert!((tree.path_probability(path) - paths.probability(path)).abs() <= 1e-15);
    }
}

#[test]
fn risk_neutral_anticipation_is_a_fixed_point() {
    let p = params(4);
    let tilde = risk_neutral_binomial(&p).unwrap();
    let nu = Anticipation::new(tilde.terminal_distribution()).unwrap();
    let minimal = minimal_measure(&tilde, &nu).unwrap();
    for (a, b) in minimal.transitions().iter().flatten().zip(tilde.transitions().iter().flatten()) {
        assert!((a - b).abs() <= 1e-13);
    }
    assert!(martingale_defect(&minimal, &p) <= 1e-13);
}

#[test]
fn pruned_nodes_keep_risk_neutral_transitions() {
    let p = params(3);
    let tilde = risk_neutral_binomial(&p).unwrap();
    let nu = Anticipation::with_pruning(vec![0.0, 0.0, 0.5, 0.5]).unwrap();
    let minimal = minimal_measure(&tilde, &nu).unwrap();
    // the all-up node at time 2 only leads to terminals with ν = 0
    assert_eq!(minimal.up_probability(2, 0), tilde.up_probability(2, 0));
    assert_eq!(minimal.terminal_distribution()[0], 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn minimal_measure_is_a_probability_tree(
        periods in 1usize..7,
        raw in proptest::collection::vec(0.01f64..1.0, 7),
        seed in any::<u64>(),
    ) {
        let mut rng = common::rng(seed);
        let p = BinomialParams { periods, ..common::random_binomial(&mut rng, 1) };
        let total: f64 = raw[..=periods].iter().sum();
        let nu = Anticipation::new(raw[..=periods].iter().map(|w| w / total).collect()).unwrap();
        let minimal = minimal_measure(&risk_neutral_binomial(&p).unwrap(), &nu).unwrap();
        for level in minimal.transitions() {
            for up in level {
                prop_assert!(*up > 0.0 && *up < 1.0);
            }
        }
        let mass: f64 = minimal.terminal_distribution().iter().sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn risk_neutral_measure_is_a_martingale(
        r in 0.0f64..0.05, spread in 0.01f64..0.2, k in 0.01f64..0.3, periods in 1usize..8,
    ) {
        let p = BinomialParams::new(10.0, r + spread, k, r, periods, 100.0).unwrap();
        prop_assert!(martingale_defect(&risk_neutral_binomial(&p).unwrap(), &p) <= 1e-12);
    }
}
