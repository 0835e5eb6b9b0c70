mod common;

use proptest::prelude::*;
use weakinfo::complete::{single_period_closed_form, CompleteMarket, CompleteSolver, LambdaMethod};
use weakinfo::market::{BinomialParams, PathSpace};
use weakinfo::{Anticipation, Exec, Proportion, SolverError, Utility};

#[test]
fn additional_value_is_nonnegative() {
    let mut rng = common::rng(21);
    for family in 0..3 {
        for _ in 0..100 {
            let p = common::random_binomial(&mut rng, 6);
            let utility = common::random_utility(&mut rng, family);
            let nu = common::dirichlet(&mut rng, p.periods + 1);
            let report = common::solver(&p, utility, nu).value_of_information(p.wealth, LambdaMethod::ClosedForm).unwrap();
            let slack = 1e-12 * report.riskless_utility.abs().max(1.0);
            assert!(report.additional >= -slack, "{utility:?}: F = {}", report.additional);
        }
    }
}

#[test]
fn additional_value_vanishes_at_the_risk_neutral_law() {
    let mut rng = common::rng(22);
    for family in 0..3 {
        for _ in 0..20 {
            let p = common::random_binomial(&mut rng, 6);
            let utility = common::random_utility(&mut rng, family);
            let market = CompleteMarket::binomial(&p).unwrap();
            let nu = market.risk_neutral().terminal_distribution(&market);
            let solver = CompleteSolver::new(market, utility, Anticipation::new(nu).unwrap()).unwrap();
            for method in [LambdaMethod::ClosedForm, LambdaMethod::Generic] {
                let report = solver.value_of_information(p.wealth, method).unwrap();
                assert!(report.additional.abs() <= 1e-9 * report.value.abs().max(1.0), "{utility:?} {method:?}");
            }
        }
    }
}

#[test]
fn log_wealth_is_homogeneous() {
    let p = BinomialParams::new(20.0, 0.09, 0.019, 0.032, 4, 200.0).unwrap();
    let solver = common::solver(&p, Utility::Log, vec![0.1, 0.2, 0.3, 0.25, 0.15]);
    let one = solver.solve(100.0, LambdaMethod::Generic).unwrap();
    let two = solver.solve(200.0, LambdaMethod::Generic).unwrap();
    assert!(common::relative_gap(one.report.lambda, 2.0 * two.report.lambda) <= 1e-10);
    for (a, b) in one.portfolio.deltas().iter().flatten().zip(two.portfolio.deltas().iter().flatten()) {
        assert!(common::relative_gap(2.0 * a, *b) <= 1e-9);
    }
}

#[test]
fn exponential_holdings_ignore_wealth() {
    let p = BinomialParams::new(20.0, 0.09, 0.019, 0.032, 3, 200.0).unwrap();
    let solver = common::solver(&p, Utility::Exponential { alpha: 0.01 }, vec![0.2, 0.4, 0.3, 0.1]);
    let low = solver.solve(100.0, LambdaMethod::ClosedForm).unwrap();
    let high = solver.solve(900.0, LambdaMethod::ClosedForm).unwrap();
    for (a, b) in low.portfolio.deltas().iter().flatten().zip(high.portfolio.deltas().iter().flatten()) {
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
    }
}

#[test]
fn one_period_formula_matches_tree_root() {
    let mut rng = common::rng(23);
    for family in 0..3 {
        for _ in 0..30 {
            let p = common::random_binomial(&mut rng, 1);
            let p = BinomialParams { periods: 1, ..p };
            let utility = common::random_utility(&mut rng, family);
            let nu = common::dirichlet(&mut rng, 2);
            let closed = single_period_closed_form(utility, &p, &Anticipation::new(nu.clone()).unwrap()).unwrap();
            let tree = common::solver(&p, utility, nu).solve(p.wealth, LambdaMethod::Generic).unwrap();
            assert!(common::relative_gap(closed, tree.portfolio.delta(0, 0)) <= 1e-8, "{utility:?}");
        }
    }
}

#[test]
fn three_state_market_meets_its_budget() {
    let mut rng = common::rng(24);
    for family in 0..3 {
        for _ in 0..10 {
            let (spec, q) = common::random_three_state(&mut rng, 2);
            let market = CompleteMarket::general(&spec).unwrap();
            let step = market.martingale_step();
            for (a, b) in step.iter().zip(&q) {
                assert!((a - b).abs() <= 1e-10);
            }
            let utility = common::random_utility(&mut rng, family);
            let nu = common::dirichlet(&mut rng, market.terminal_count());
            let solver = CompleteSolver::new(market.clone(), utility, Anticipation::new(nu).unwrap()).unwrap();
            let v = spec.wealth;
            let solution = solver.solve(v, LambdaMethod::Generic).unwrap();
            let growth = market.growth().powi(market.periods() as i32);
            let price = market.risk_neutral().expectation(|path| solution.terminal_wealth[market.terminal_of(path)]) / growth;
            assert!(common::relative_gap(price, v) <= 1e-10);
            assert!(common::relative_gap(solution.wealth.root(), v) <= 1e-10);
            let closed = solver.value_of_information(v, LambdaMethod::ClosedForm).unwrap();
            assert!(common::relative_gap(closed.value, solution.report.value) <= 1e-9);
        }
    }
}

#[test]
fn execution_modes_agree_bitwise() {
    let p = BinomialParams::new(20.0, 0.08, 0.04, 0.03, 10, 100.0).unwrap();
    let nu = common::dirichlet(&mut common::rng(25), 11);
    let seq = common::solver(&p, Utility::Power { gamma: -2.0 }, nu.clone()).with_exec(Exec::Sequential);
    let par = common::solver(&p, Utility::Power { gamma: -2.0 }, nu).with_exec(Exec::Parallel);
    assert_eq!(seq.solve(100.0, LambdaMethod::Generic).unwrap(), par.solve(100.0, LambdaMethod::Generic).unwrap());
}

#[test]
fn domain_errors_are_reported() {
    let p = BinomialParams::new(20.0, 0.08, 0.04, 0.03, 2, 100.0).unwrap();
    let solver = common::solver(&p, Utility::Log, vec![0.3, 0.4, 0.3]);
    assert!(matches!(solver.value_of_information(-1.0, LambdaMethod::Generic), Err(SolverError::Domain(_))));
    let pruned = CompleteSolver::new(
        CompleteMarket::binomial(&p).unwrap(),
        Utility::Exponential { alpha: 0.1 },
        Anticipation::with_pruning(vec![0.0, 0.5, 0.5]).unwrap(),
    );
    assert!(matches!(pruned, Err(SolverError::PruningUnsupported(_))));
}

#[test]
fn exponential_proportion_is_defined() {
    let p = BinomialParams::new(20.0, 0.08, 0.04, 0.03, 2, 100.0).unwrap();
    let report = common::solver(&p, Utility::Exponential { alpha: 0.05 }, vec![0.3, 0.4, 0.3])
        .value_of_information(100.0, LambdaMethod::ClosedForm)
        .unwrap();
    assert!(report.value < 0.0);
    assert!(matches!(report.proportion, Proportion::Defined(x) if x <= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wealth_process_is_a_discounted_martingale(seed in any::<u64>(), family in 0usize..3) {
        let mut rng = common::rng(seed);
        let p = common::random_binomial(&mut rng, 5);
        let utility = common::random_utility(&mut rng, family);
        let nu = common::dirichlet(&mut rng, p.periods + 1);
        let solver = common::solver(&p, utility, nu);
        let solution = solver.solve(p.wealth, LambdaMethod::ClosedForm).unwrap();
        let market = solver.market();
        let step = market.martingale_step();
        for n in 0..p.periods {
            for node in 0..market.node_count(n) {
                let next: f64 = (0..2).map(|w| step[w] * solution.wealth.levels[n + 1][market.child(n, node, w)]).sum();
                let here = solution.wealth.levels[n][node];
                prop_assert!((next / p.growth() - here).abs() <= 1e-10 * here.abs().max(1.0));
            }
        }
    }
}
