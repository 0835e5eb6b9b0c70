//! Independent oracles and random instance generators shared by the
//! integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use weakinfo::complete::{CompleteMarket, CompleteSolver, PortfolioTree};
use weakinfo::market::{BinomialParams, CompleteMarketSpec, PathSpace};
use weakinfo::trinomial::ProductMeasureSet;
use weakinfo::{Anticipation, Utility};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dirichlet(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1) + 1e-3).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

pub fn random_binomial(rng: &mut impl Rng, max_periods: usize) -> BinomialParams {
    let r = rng.random_range(0.0..0.05);
    let h = r + rng.random_range(0.01..0.15);
    let k = rng.random_range(0.01..0.2);
    let s = rng.random_range(5.0..50.0);
    let v = rng.random_range(50.0..500.0);
    let periods = rng.random_range(1..=max_periods);
    BinomialParams::new(s, h, k, r, periods, v).unwrap()
}

/// A 3-state market with two risky assets and known martingale law `q`.
pub fn random_three_state(rng: &mut impl Rng, periods: usize) -> (CompleteMarketSpec, Vec<f64>) {
    loop {
        let q = dirichlet(rng, 3);
        let r = rng.random_range(0.0..0.04);
        let mut returns: Vec<Vec<f64>> = (0..3).map(|_| (0..2).map(|_| rng.random_range(0.8..1.3)).collect()).collect();
        for j in 0..2 {
            let mean: f64 = (0..3).map(|w| q[w] * returns[w][j]).sum();
            for row in returns.iter_mut() {
                row[j] += 1.0 + r - mean;
            }
        }
        let prices = vec![rng.random_range(5.0..30.0), rng.random_range(5.0..30.0)];
        if let Ok(spec) = CompleteMarketSpec::new(prices, returns, r, periods, rng.random_range(50.0..300.0)) {
            return (spec, q);
        }
    }
}

pub fn random_utility(rng: &mut impl Rng, family: usize) -> Utility {
    match family {
        0 => Utility::Log,
        1 => {
            let gamma: f64 = rng.random_range(-3.0..0.9);
            Utility::Power { gamma: if gamma.abs() < 0.05 { 0.5 } else { gamma } }
        }
        _ => Utility::Exponential { alpha: rng.random_range(0.001..0.03) },
    }
}

pub fn second_derivative(u: Utility, x: f64) -> f64 {
    match u {
        Utility::Log => -1.0 / (x * x),
        Utility::Power { gamma } => (gamma - 1.0) * x.powf(gamma - 2.0),
        Utility::Exponential { alpha } => -alpha * alpha * (-alpha * x).exp(),
    }
}

/// Expected utility `Σ_b w_b U(V_b)`, or `None` outside the domain.
pub fn expected_utility(u: Utility, weights: &[f64], wealth: &[f64]) -> Option<f64> {
    let mut total = 0.0;
    for (w, x) in weights.iter().zip(wealth) {
        if *w > 0.0 {
            total += w * u.evaluate(*x).ok()?;
        }
    }
    Some(total)
}

/// Primal oracle: maximizes `Σ ν_b U(V_b)` subject to `A V = c` by Newton's
/// method on the KKT system, starting from a feasible point.
pub fn constrained_maximum(u: Utility, nu: &[f64], a: &DMatrix<f64>, start: Vec<f64>) -> (f64, Vec<f64>) {
    let n = nu.len();
    let m = a.nrows();
    let mut x = start;
    let mut value = expected_utility(u, nu, &x).expect("feasible start");
    for _ in 0..200 {
        let mut kkt = DMatrix::<f64>::zeros(n + m, n + m);
        let mut rhs = DVector::<f64>::zeros(n + m);
        for b in 0..n {
            kkt[(b, b)] = nu[b] * second_derivative(u, x[b]);
            rhs[b] = -nu[b] * u.marginal(x[b]).unwrap();
            for i in 0..m {
                kkt[(b, n + i)] = a[(i, b)];
                kkt[(n + i, b)] = a[(i, b)];
            }
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { break };
        let direction: Vec<f64> = sol.iter().take(n).copied().collect();
        let decrement: f64 = -direction.iter().zip(rhs.iter()).map(|(d, g)| d * g).sum::<f64>();
        if decrement.abs() < 1e-22 {
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-14 {
            let trial: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + t * di).collect();
            if let Some(v) = expected_utility(u, nu, &trial) {
                if v >= value {
                    x = trial;
                    moved = v > value;
                    value = v;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (value, x)
}

/// Dense `2^N x 3^N` matrix of product-measure path probabilities.
pub fn product_matrix(set: &ProductMeasureSet) -> DMatrix<f64> {
    DMatrix::from_fn(set.len(), set.path_count(), |j, b| set.probability(j, b))
}

/// One-period trinomial oracle: scan the one-dimensional feasible line
/// `V = vR + s z` (with `z` spanning the null space of the two budget
/// rows) on a grid, then refine by golden-section search.
pub fn one_period_line_search(u: Utility, nu: &[f64], a: &DMatrix<f64>, riskless: f64) -> f64 {
    let (p, q) = (a.row(0), a.row(1));
    let z = [p[1] * q[2] - p[2] * q[1], p[2] * q[0] - p[0] * q[2], p[0] * q[1] - p[1] * q[0]];
    let point = |s: f64| [0, 1, 2].map(|b| riskless + s * z[b]);
    let objective = |s: f64| expected_utility(u, nu, &point(s)).unwrap_or(f64::NEG_INFINITY);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for b in 0..3 {
        if u.requires_positive_wealth() && z[b] != 0.0 {
            let edge = -riskless / z[b];
            if z[b] > 0.0 {
                lo = lo.max(edge);
            } else {
                hi = hi.min(edge);
            }
        }
    }
    if !lo.is_finite() {
        lo = -1e3 * riskless;
    }
    if !hi.is_finite() {
        hi = 1e3 * riskless;
    }
    let grid = 4001;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 1..grid {
        let s = lo + (hi - lo) * i as f64 / grid as f64;
        let v = objective(s);
        if v > best.0 {
            best = (v, s);
        }
    }
    let step = (hi - lo) / grid as f64;
    let (mut a0, mut b0) = ((best.1 - step).max(lo), (best.1 + step).min(hi));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b0 - ratio * (b0 - a0);
        let d = a0 + ratio * (b0 - a0);
        if objective(c) > objective(d) {
            b0 = d;
        } else {
            a0 = c;
        }
    }
    objective(0.5 * (a0 + b0))
}

/// Terminal wealth of the self-financing strategy holding `delta[n][prefix]`
/// shares at each node, started from `v`, along every path.
pub fn run_strategy(market: &CompleteMarket, delta: &[Vec<f64>], v: f64) -> Vec<f64> {
    let growth = market.growth();
    (0..market.path_count())
        .map(|path| {
            let mut wealth = v;
            for n in 0..market.periods() {
                let d = delta[n][market.prefix(path, n)];
                let s_now = market.risky_prices(n, market.node_of(path, n))[0];
                let s_next = market.risky_prices(n + 1, market.node_of(path, n + 1))[0];
                wealth = (wealth - d * s_now) * growth + d * s_next;
            }
            wealth
        })
        .collect()
}

/// Optimal holdings expanded onto path prefixes.
pub fn prefix_deltas(market: &CompleteMarket, portfolio: &PortfolioTree) -> Vec<Vec<f64>> {
    (0..market.periods())
        .map(|n| {
            (0..2usize.pow(n as u32))
                .map(|prefix| portfolio.delta(n, market.node_of(prefix, n)))
                .collect()
        })
        .collect()
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn solver(params: &BinomialParams, utility: Utility, nu: Vec<f64>) -> CompleteSolver {
    CompleteSolver::new(CompleteMarket::binomial(params).unwrap(), utility, Anticipation::new(nu).unwrap()).unwrap()
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
