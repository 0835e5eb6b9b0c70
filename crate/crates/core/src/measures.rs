//! Risk-neutral measure, the minimal measure `P^ν` attached to an
//! anticipation `ν` of the terminal price, Radon-Nikodym densities and a
//! brute-force check of the minimality property.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;
use thiserror::Error;

use crate::market::{BinomialParams, BinomialPaths, MarketError, PathSpace};
use crate::par::{ordered_sum, Exec};
use crate::scalar::{binomial_coefficient, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weights must sum to 1, got {sum}")]
    NotNormalized { sum: f64 },
    #[error("weight {index} is negative ({value})")]
    Negative { index: usize, value: f64 },
    #[error("weight {index} is zero; zero weights need pruning mode")]
    ZeroWeight { index: usize },
    #[error("transition probability at node ({n}, {i}) is outside [0, 1]: {value}")]
    InvalidTransition { n: usize, i: usize, value: f64 },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("reference measure gives zero probability to path {path}")]
    ZeroProbabilityPath { path: String },
    #[error("reference measure gives zero probability to terminal node {terminal}")]
    ZeroProbabilityTerminal { terminal: usize },
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// A distribution `ν` over the terminal nodes of a lattice.
///
/// For binomial lattices entry `i` is the node with `i` down-moves.
#[derive(Debug, Clone, PartialEq)]
pub struct Anticipation<T = f64> {
    weights: Vec<T>,
    pruning: bool,
}

impl<T: Scalar> Anticipation<T> {
    /// Strictly positive weights summing to one.
    pub fn new(weights: Vec<T>) -> Result<Self, MeasureError> {
        Self::build(weights, false)
    }

    /// Weights summing to one where zeros are allowed; zero-weight terminal
    /// nodes are treated as impossible and pruned by the solvers.
    pub fn with_pruning(weights: Vec<T>) -> Result<Self, MeasureError> {
        Self::build(weights, true)
    }

    fn build(weights: Vec<T>, pruning: bool) -> Result<Self, MeasureError> {
        if weights.is_empty() {
            return Err(MeasureError::DimensionMismatch { expected: 1, got: 0 });
        }
        for (index, w) in weights.iter().enumerate() {
            if *w < T::zero() {
                return Err(MeasureError::Negative { index, value: w.to_f64() });
            }
            if !pruning && w.is_zero() {
                return Err(MeasureError::ZeroWeight { index });
            }
        }
        let sum = weights.iter().fold(T::zero(), |acc, w| acc + w.clone());
        if !sum.approx_eq(&T::one()) {
            return Err(MeasureError::NotNormalized { sum: sum.to_f64() });
        }
        Ok(Anticipation { weights, pruning })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_pruning(&self) -> bool {
        self.pruning
    }

    /// Indices with strictly positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&i| self.weights[i].is_positive()).collect()
    }

    pub fn to_f64(&self) -> Anticipation<f64> {
        Anticipation { weights: self.weights.iter().map(Scalar::to_f64).collect(), pruning: self.pruning }
    }

    fn check_len(&self, expected: usize) -> Result<(), MeasureError> {
        if self.len() != expected {
            return Err(MeasureError::DimensionMismatch { expected, got: self.len() });
        }
        Ok(())
    }
}

impl Anticipation<f64> {
    pub fn uniform(n: usize) -> Self {
        Anticipation { weights: vec![1.0 / n as f64; n], pruning: false }
    }
}

/// Markov transition tree on the recombining binomial lattice.
///
/// `up[n][i]` is the probability of an up-move from node `(n, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinomialMeasure<T = f64> {
    up: Vec<Vec<T>>,
}

impl<T: Scalar> BinomialMeasure<T> {
    pub fn from_transitions(up: Vec<Vec<T>>) -> Result<Self, MeasureError> {
        for (n, level) in up.iter().enumerate() {
            if level.len() != n + 1 {
                return Err(MeasureError::DimensionMismatch { expected: n + 1, got: level.len() });
            }
            for (i, p) in level.iter().enumerate() {
                if *p < T::zero() || *p > T::one() {
                    return Err(MeasureError::InvalidTransition { n, i, value: p.to_f64() });
                }
            }
        }
        Ok(BinomialMeasure { up })
    }

    /// Same up-probability at every node.
    pub fn constant(periods: usize, up: T) -> Result<Self, MeasureError> {
        Self::from_transitions((0..periods).map(|n| vec![up.clone(); n + 1]).collect())
    }

    pub fn periods(&self) -> usize {
        self.up.len()
    }

    pub fn up_probability(&self, n: usize, i: usize) -> &T {
        &self.up[n][i]
    }

    pub fn down_probability(&self, n: usize, i: usize) -> T {
        T::one() - self.up[n][i].clone()
    }

    pub fn transitions(&self) -> &[Vec<T>] {
        &self.up
    }

    pub fn path_probability(&self, path: usize) -> T {
        let mut prob = T::one();
        let mut downs = 0;
        for n in 0..self.periods() {
            if path >> n & 1 == 0 {
                prob = prob * self.up[n][downs].clone();
            } else {
                prob = prob * self.down_probability(n, downs);
                downs += 1;
            }
        }
        prob
    }

    /// Probability of reaching each node `(n, i)`.
    pub fn node_probabilities(&self) -> Vec<Vec<T>> {
        let mut levels = vec![vec![T::one()]];
        for n in 0..self.periods() {
            let prev = &levels[n];
            let mut next = vec![T::zero(); n + 2];
            for (i, mass) in prev.iter().enumerate() {
                next[i] = next[i].clone() + mass.clone() * self.up[n][i].clone();
                next[i + 1] = next[i + 1].clone() + mass.clone() * self.down_probability(n, i);
            }
            levels.push(next);
        }
        levels
    }

    pub fn terminal_distribution(&self) -> Vec<T> {
        self.node_probabilities().pop().unwrap_or_default()
    }

    pub fn to_path_measure(&self) -> PathMeasure<T> {
        let paths = BinomialPaths { periods: self.periods() };
        PathMeasure { branching: 2, periods: self.periods(), probs: (0..paths.path_count()).map(|p| self.path_probability(p)).collect() }
    }
}

/// Up-probability `(r + k) / (h + k)` of the binomial martingale measure.
pub fn risk_neutral_probability<T: Scalar>(h: T, k: T, r: T) -> T {
    (r + k.clone()) / (h + k)
}

/// The unique martingale measure of the binomial model.
pub fn risk_neutral_binomial(params: &BinomialParams) -> Result<BinomialMeasure<f64>, MeasureError> {
    params.validate()?;
    BinomialMeasure::constant(params.periods, risk_neutral_probability(params.h, params.k, params.r))
}

/// Largest relative violation of `E[S_{n+1} | node] = (1+r) S_n` over all
/// nodes of a binomial tree.
pub fn martingale_defect<T: Scalar>(measure: &BinomialMeasure<T>, params: &BinomialParams) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 0..measure.periods() {
        for i in 0..=n {
            let p = measure.up_probability(n, i).to_f64();
            let expected = p * params.price(n + 1, i) + (1.0 - p) * params.price(n + 1, i + 1);
            let target = params.growth() * params.price(n, i);
            worst = worst.max((expected - target).abs() / target.abs());
        }
    }
    worst
}

/// Minimal measure `P^ν(ω) = Σ_x P̃(ω | S_N = x) ν(x)` as a transition tree.
///
/// Built as the h-transform of `P̃` by `h(node) = Ẽ[ν(S_N)/P̃(S_N) | node]`;
/// nodes that `P^ν` cannot reach keep the transitions of `P̃`.
pub fn minimal_measure<T: Scalar>(
    risk_neutral: &BinomialMeasure<T>,
    anticipation: &Anticipation<T>,
) -> Result<BinomialMeasure<T>, MeasureError> {
    let periods = risk_neutral.periods();
    anticipation.check_len(periods + 1)?;
    let terminal = risk_neutral.terminal_distribution();
    let mut h: Vec<T> = Vec::with_capacity(periods + 1);
    for (x, (nu, p)) in anticipation.weights().iter().zip(&terminal).enumerate() {
        if !p.is_positive() {
            return Err(MeasureError::ZeroProbabilityTerminal { terminal: x });
        }
        h.push(nu.clone() / p.clone());
    }
    let mut up = vec![Vec::new(); periods];
    for n in (0..periods).rev() {
        let mut level_h = Vec::with_capacity(n + 1);
        let mut level_up = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let p_up = risk_neutral.up_probability(n, i).clone();
            let up_part = p_up.clone() * h[i].clone();
            let node_h = up_part.clone() + risk_neutral.down_probability(n, i) * h[i + 1].clone();
            if node_h.is_zero() {
                level_up.push(p_up);
            } else {
                level_up.push(up_part / node_h.clone());
            }
            level_h.push(node_h);
        }
        up[n] = level_up;
        h = level_h;
    }
    BinomialMeasure::from_transitions(up)
}

/// Closed-form combinatorial transition of `P^ν` from a node at time
/// `N - l` with `i` down-moves: `(up, down)` probabilities.
///
/// Valid for `1 <= l <= N` (`l = N` is the root, where `i` must be 0).
pub fn binomial_transition_formula<T: Scalar>(
    periods: usize,
    remaining: usize,
    downs: usize,
    anticipation: &Anticipation<T>,
) -> Result<(T, T), MeasureError> {
    anticipation.check_len(periods + 1)?;
    let (n, l, i) = (periods as u64, remaining as u64, downs as u64);
    if remaining == 0 || remaining > periods || downs > periods - remaining {
        return Err(MeasureError::IndexOutOfRange(format!(
            "need 1 <= l <= N and 0 <= i <= N - l, got N = {periods}, l = {remaining}, i = {downs}"
        )));
    }
    let nu = anticipation.weights();
    // (N-i-j)(N-i-j-1)...(N-i-(l-1)), empty when j = l
    let falling = |j: u64| -> T { (j..l).fold(T::one(), |acc, m| acc * T::from_u64(n - i - m)) };
    // (i+1)(i+2)...(i+j)
    let rising = |from: u64, j: u64| -> T { (1..=j).fold(T::one(), |acc, m| acc * T::from_u64(from + m)) };
    let mut denominator = T::zero();
    for j in 0..=l {
        denominator = denominator + binomial_coefficient::<T>(l, j) * falling(j) * rising(i, j) * nu[(i + j) as usize].clone();
    }
    let mut up = T::zero();
    let mut down = T::zero();
    for j in 0..l {
        let c = binomial_coefficient::<T>(l - 1, j);
        up = up + c.clone() * falling(j) * rising(i, j) * nu[(i + j) as usize].clone();
        down = down + c * falling(j + 1) * rising(i, j + 1) * nu[(i + j + 1) as usize].clone();
    }
    if denominator.is_zero() {
        return Err(MeasureError::IndexOutOfRange(format!("node ({}, {downs}) has zero probability under P^ν", periods - remaining)));
    }
    Ok((up / denominator.clone(), down / denominator))
}

/// Probabilities over the enumerated paths of a [`PathSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasure<T = f64> {
    branching: usize,
    periods: usize,
    probs: Vec<T>,
}

impl<T: Scalar> PathMeasure<T> {
    pub fn new(branching: usize, periods: usize, probs: Vec<T>) -> Result<Self, MeasureError> {
        let expected = branching.pow(periods as u32);
        if probs.len() != expected {
            return Err(MeasureError::DimensionMismatch { expected, got: probs.len() });
        }
        for (index, p) in probs.iter().enumerate() {
            if *p < T::zero() {
                return Err(MeasureError::Negative { index, value: p.to_f64() });
            }
        }
        let sum = probs.iter().fold(T::zero(), |acc, p| acc + p.clone());
        if !sum.approx_eq(&T::one()) {
            return Err(MeasureError::NotNormalized { sum: sum.to_f64() });
        }
        Ok(PathMeasure { branching, periods, probs })
    }

    /// Independent periods with the one-period law `step[n]` at period `n`.
    pub fn product(steps: &[Vec<T>]) -> Result<Self, MeasureError> {
        let branching = steps.first().map_or(1, Vec::len);
        let periods = steps.len();
        let count = branching.pow(periods as u32);
        let probs = (0..count)
            .map(|path| {
                let mut rest = path;
                steps.iter().fold(T::one(), |acc, step| {
                    let w = rest % branching;
                    rest /= branching;
                    acc * step[w].clone()
                })
            })
            .collect();
        Self::new(branching, periods, probs)
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probs
    }

    pub fn probability(&self, path: usize) -> &T {
        &self.probs[path]
    }

    pub fn terminal_distribution(&self, space: &impl PathSpace) -> Vec<T> {
        let mut out = vec![T::zero(); space.terminal_count()];
        for (path, p) in self.probs.iter().enumerate() {
            let x = space.terminal_of(path);
            out[x] = out[x].clone() + p.clone();
        }
        out
    }

    /// Probability of every node (path prefix) at time `n`, indexed by the
    /// prefix in base `M`.
    pub fn prefix_probabilities(&self, n: usize) -> Vec<T> {
        let width = self.branching.pow(n as u32);
        let mut out = vec![T::zero(); width];
        for (path, p) in self.probs.iter().enumerate() {
            out[path % width] = out[path % width].clone() + p.clone();
        }
        out
    }

    /// Conditional one-period law at every node of time `n`; nodes of zero
    /// probability get `None`.
    pub fn transitions_at(&self, n: usize) -> Vec<Option<Vec<T>>> {
        let here = self.prefix_probabilities(n);
        let next = self.prefix_probabilities(n + 1);
        let width = here.len();
        (0..width)
            .map(|prefix| {
                if here[prefix].is_zero() {
                    return None;
                }
                Some((0..self.branching).map(|w| next[prefix + w * width].clone() / here[prefix].clone()).collect())
            })
            .collect()
    }

    pub fn expectation(&self, f: impl Fn(usize) -> f64) -> f64 {
        ordered_sum(self.probs.iter().enumerate().map(|(path, p)| p.to_f64() * f(path)))
    }
}

/// Path-level minimal measure on any enumerated path space.
pub fn minimal_measure_paths<T: Scalar>(
    space: &impl PathSpace,
    risk_neutral: &PathMeasure<T>,
    anticipation: &Anticipation<T>,
) -> Result<PathMeasure<T>, MeasureError> {
    anticipation.check_len(space.terminal_count())?;
    let terminal = risk_neutral.terminal_distribution(space);
    for (x, p) in terminal.iter().enumerate() {
        if !p.is_positive() {
            return Err(MeasureError::ZeroProbabilityTerminal { terminal: x });
        }
    }
    let probs = risk_neutral
        .probs
        .iter()
        .enumerate()
        .map(|(path, p)| {
            let x = space.terminal_of(path);
            p.clone() * anticipation.weights()[x].clone() / terminal[x].clone()
        })
        .collect();
    PathMeasure::new(risk_neutral.branching, risk_neutral.periods, probs)
}

/// Density `dP/dQ` per path.
#[derive(Debug, Clone, PartialEq)]
pub struct RadonNikodym<T = f64> {
    ratios: Vec<T>,
    terminal: Option<Vec<T>>,
}

impl<T: Scalar> RadonNikodym<T> {
    pub fn ratios(&self) -> &[T] {
        &self.ratios
    }

    pub fn ratio(&self, path: usize) -> &T {
        &self.ratios[path]
    }

    /// Value per terminal node when the density only depends on `S_N`.
    pub fn terminal_values(&self) -> Option<&[T]> {
        self.terminal.as_deref()
    }

    pub fn is_terminal_measurable(&self) -> bool {
        self.terminal.is_some()
    }

    /// `E^Q[dP/dQ]`, which is 1 whenever `P` lives on the support of `Q`.
    pub fn expectation_under(&self, q: &PathMeasure<T>) -> T {
        self.ratios
            .iter()
            .zip(q.probabilities())
            .fold(T::zero(), |acc, (r, p)| acc + r.clone() * p.clone())
    }
}

pub fn radon_nikodym<T: Scalar>(
    space: &impl PathSpace,
    p: &PathMeasure<T>,
    q: &PathMeasure<T>,
) -> Result<RadonNikodym<T>, MeasureError> {
    if p.probs.len() != q.probs.len() {
        return Err(MeasureError::DimensionMismatch { expected: q.probs.len(), got: p.probs.len() });
    }
    let mut ratios = Vec::with_capacity(p.probs.len());
    for (path, (pp, qq)) in p.probs.iter().zip(&q.probs).enumerate() {
        if !qq.is_positive() {
            return Err(MeasureError::ZeroProbabilityPath { path: space.path_label(path) });
        }
        ratios.push(pp.clone() / qq.clone());
    }
    let mut terminal: Vec<Option<T>> = vec![None; space.terminal_count()];
    let mut measurable = true;
    for (path, ratio) in ratios.iter().enumerate() {
        let slot = &mut terminal[space.terminal_of(path)];
        match slot {
            None => *slot = Some(ratio.clone()),
            Some(existing) if existing.approx_eq(ratio) => {}
            Some(_) => {
                measurable = false;
                break;
            }
        }
    }
    let terminal = if measurable { terminal.into_iter().collect::<Option<Vec<T>>>() } else { None };
    Ok(RadonNikodym { ratios, terminal })
}

/// Convex test functions for the minimality check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvexTest {
    Square,
    XLogX,
    Exp,
}

impl ConvexTest {
    pub const ALL: [ConvexTest; 3] = [ConvexTest::Square, ConvexTest::XLogX, ConvexTest::Exp];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            ConvexTest::Square => x * x,
            ConvexTest::XLogX => {
                if x == 0.0 {
                    0.0
                } else {
                    x * x.ln()
                }
            }
            ConvexTest::Exp => x.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimalityOptions {
    /// Random Dirichlet draws, on top of the deterministic grid.
    pub samples: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for MinimalityOptions {
    fn default() -> Self {
        MinimalityOptions { samples: 10_000, seed: 0x5eed, exec: Exec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexTestOutcome {
    pub function: ConvexTest,
    /// `Ẽ[φ(dP^ν/dP̃)]`.
    pub minimal_value: f64,
    /// Smallest `Ẽ[φ(dQ/dP̃)] - Ẽ[φ(dP^ν/dP̃)]` over the sampled `Q`.
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalityReport {
    pub measures_checked: usize,
    pub outcomes: Vec<ConvexTestOutcome>,
}

impl MinimalityReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.outcomes.iter().all(|o| o.worst_margin >= -tolerance)
    }
}

/// Samples measures `Q` with terminal marginal `ν` and checks that none of
/// them beats `P^ν` for `φ ∈ {x², x ln x, eˣ}`.
///
/// `Q` is parameterised by conditional path weights given each terminal node:
/// Dirichlet(1) draws plus a grid moving each group from the bridge weights
/// towards each of its vertices.
pub fn verify_minimality(
    space: &impl PathSpace,
    risk_neutral: &PathMeasure<f64>,
    anticipation: &Anticipation<f64>,
    options: &MinimalityOptions,
) -> Result<MinimalityReport, MeasureError> {
    let minimal = minimal_measure_paths(space, risk_neutral, anticipation)?;
    let p = risk_neutral.probabilities();
    let terminal = risk_neutral.terminal_distribution(space);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); space.terminal_count()];
    for path in 0..space.path_count() {
        groups[space.terminal_of(path)].push(path);
    }
    let nu = anticipation.weights();
    let bridge: Vec<Vec<f64>> = groups
        .iter()
        .enumerate()
        .map(|(x, g)| g.iter().map(|&path| p[path] / terminal[x]).collect())
        .collect();

    let objective = |q: &[f64]| -> [f64; 3] {
        let mut out = [0.0; 3];
        for (slot, phi) in out.iter_mut().zip(ConvexTest::ALL) {
            *slot = ordered_sum(p.iter().zip(q).map(|(pp, qq)| pp * phi.apply(qq / pp)));
        }
        out
    };
    let assemble = |weights: &[Vec<f64>]| -> Vec<f64> {
        let mut q = vec![0.0; p.len()];
        for (x, g) in groups.iter().enumerate() {
            for (slot, &path) in g.iter().enumerate() {
                q[path] = nu[x] * weights[x][slot];
            }
        }
        q
    };

    let baseline = objective(minimal.probabilities());

    let mut grid = vec![bridge.clone()];
    for (x, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            continue;
        }
        for vertex in 0..g.len() {
            for t in [0.1, 0.5, 0.9, 0.999] {
                let mut weights = bridge.clone();
                for (slot, w) in weights[x].iter_mut().enumerate() {
                    let corner = if slot == vertex { 1.0 } else { 0.0 };
                    *w = (1.0 - t) * *w + t * corner;
                }
                grid.push(weights);
            }
        }
    }
    let grid_values = options.exec.map_slice(&grid, |w| objective(&assemble(w)));
    let random_values = options.exec.map_range(options.samples, |sample| {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(sample as u64));
        let weights: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| {
                let draws: Vec<f64> = g.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let total: f64 = draws.iter().sum();
                draws.into_iter().map(|d| d / total).collect()
            })
            .collect();
        objective(&assemble(&weights))
    });

    let outcomes = ConvexTest::ALL
        .iter()
        .enumerate()
        .map(|(slot, &function)| {
            let worst = grid_values
                .iter()
                .chain(&random_values)
                .map(|v| v[slot] - baseline[slot])
                .fold(f64::INFINITY, f64::min);
            ConvexTestOutcome { function, minimal_value: baseline[slot], worst_margin: worst }
        })
        .collect();
    Ok(MinimalityReport { measures_checked: grid_values.len() + random_values.len(), outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num::bigint::BigInt;
    use num::rational::BigRational;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn paper_params(periods: usize) -> BinomialParams {
        BinomialParams::new(20.0, 0.09, 0.019, 0.032, periods, 200.0).unwrap()
    }

    #[test]
    fn risk_neutral_examples() {
        let m = risk_neutral_binomial(&paper_params(1)).unwrap();
        assert_relative_eq!(*m.up_probability(0, 0), 0.051 / 0.109, epsilon = 1e-15);
        assert_relative_eq!(*m.up_probability(0, 0), 0.467890, epsilon = 1e-6);
        assert_eq!(risk_neutral_probability(0.05, 0.05, 0.0), 0.5);
        assert_eq!(risk_neutral_probability(q(8, 100), q(4, 100), q(3, 100)), q(7, 12));
        let m3 = risk_neutral_binomial(&paper_params(3)).unwrap();
        assert!(martingale_defect(&m3, &paper_params(3)) < 1e-14);
    }

    #[test]
    fn anticipation_validation() {
        assert!(matches!(Anticipation::new(vec![0.5, 0.4]), Err(MeasureError::NotNormalized { .. })));
        assert!(matches!(Anticipation::new(vec![1.0, 0.0]), Err(MeasureError::ZeroWeight { index: 1 })));
        assert!(Anticipation::with_pruning(vec![1.0, 0.0]).is_ok());
        assert!(matches!(Anticipation::new(vec![1.5, -0.5]), Err(MeasureError::Negative { index: 1, .. })));
        assert!(Anticipation::new(vec![0.01, 0.01, 0.01, 0.95, 0.01, 0.01]).is_ok());
        assert!(Anticipation::new(vec![q(1, 3), q(1, 3), q(1, 3)]).is_ok());
        assert!(Anticipation::new(vec![q(1, 3), q(1, 3), q(1, 4)]).is_err());
    }

    #[test]
    fn golden_minimal_measure_tree() {
        let nu = Anticipation::new(vec![q(1, 4), q(1, 2), q(1, 8), q(1, 8)]).unwrap();
        let p = risk_neutral_probability(q(9, 100), q(19, 1000), q(32, 1000));
        let pt = BinomialMeasure::constant(3, p).unwrap();
        let m = minimal_measure(&pt, &nu).unwrap();
        assert_eq!(*m.up_probability(0, 0), q(15, 24));
        assert_eq!(m.down_probability(0, 0), q(9, 24));
        assert_eq!(m.transitions()[1], vec![q(2, 3), q(5, 9)]);
        assert_eq!(m.transitions()[2], vec![q(3, 5), q(4, 5), q(1, 4)]);
        assert_eq!(m.terminal_distribution(), nu.weights());
    }

    #[test]
    fn minimal_measure_identity_and_point_mass() {
        let pt = risk_neutral_binomial(&paper_params(4)).unwrap();
        let nu = Anticipation::new(pt.terminal_distribution()).unwrap();
        let m = minimal_measure(&pt, &nu).unwrap();
        for (a, b) in m.transitions().iter().flatten().zip(pt.transitions().iter().flatten()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
        let point = Anticipation::with_pruning(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let m = minimal_measure(&pt, &point).unwrap();
        let masses = m.node_probabilities();
        for n in 0..4 {
            assert_eq!(*m.up_probability(n, 0), 1.0);
            assert_eq!(masses[n][0], 1.0);
        }
    }

    #[test]
    fn minimal_measure_dimension_mismatch() {
        let pt = risk_neutral_binomial(&paper_params(3)).unwrap();
        let nu = Anticipation::uniform(3);
        assert_eq!(minimal_measure(&pt, &nu).unwrap_err(), MeasureError::DimensionMismatch { expected: 4, got: 3 });
    }

    #[test]
    fn transition_formula_examples() {
        let nu = Anticipation::new(vec![q(1, 4), q(1, 2), q(1, 8), q(1, 8)]).unwrap();
        let (up, down) = binomial_transition_formula(3, 3, 0, &nu).unwrap();
        assert_eq!(up, q(15, 24));
        assert_eq!(down, q(9, 24));
        let uniform = Anticipation::new(vec![q(1, 4); 4]).unwrap();
        assert_eq!(binomial_transition_formula(3, 3, 0, &uniform).unwrap().0, q(1, 2));
        let one = Anticipation::new(vec![q(3, 10), q(7, 10)]).unwrap();
        assert_eq!(binomial_transition_formula(1, 1, 0, &one).unwrap(), (q(3, 10), q(7, 10)));
        assert!(binomial_transition_formula(3, 0, 0, &nu).is_err());
        assert!(binomial_transition_formula(3, 2, 2, &nu).is_err());
    }

    #[test]
    fn transition_formula_matches_h_transform_exactly() {
        let nu = Anticipation::new(vec![q(1, 10), q(3, 10), q(1, 5), q(1, 20), q(7, 20)]).unwrap();
        let pt = BinomialMeasure::constant(4, q(2, 7)).unwrap();
        let m = minimal_measure(&pt, &nu).unwrap();
        for n in 0..4 {
            for i in 0..=n {
                let (up, down) = binomial_transition_formula(4, 4 - n, i, &nu).unwrap();
                assert_eq!(&up, m.up_probability(n, i));
                assert_eq!(down, m.down_probability(n, i));
            }
        }
    }

    #[test]
    fn radon_nikodym_examples() {
        let params = paper_params(1);
        let pt = risk_neutral_binomial(&params).unwrap();
        let nu = Anticipation::new(vec![0.5, 0.5]).unwrap();
        let pnu = minimal_measure(&pt, &nu).unwrap();
        let space = BinomialPaths { periods: 1 };
        let rn = radon_nikodym(&space, &pnu.to_path_measure(), &pt.to_path_measure()).unwrap();
        assert_relative_eq!(*rn.ratio(0), 1.068627, epsilon = 1e-6);
        assert_relative_eq!(*rn.ratio(1), 0.939655, epsilon = 1e-6);
        let same = radon_nikodym(&space, &pt.to_path_measure(), &pt.to_path_measure()).unwrap();
        assert!(same.ratios().iter().all(|r| (*r - 1.0).abs() < 1e-15));
    }

    #[test]
    fn radon_nikodym_reports_zero_path() {
        let space = BinomialPaths { periods: 2 };
        let p = PathMeasure::new(2, 2, vec![0.25; 4]).unwrap();
        let q = PathMeasure::new(2, 2, vec![0.5, 0.0, 0.25, 0.25]).unwrap();
        let err = radon_nikodym(&space, &p, &q).unwrap_err();
        assert_eq!(err, MeasureError::ZeroProbabilityPath { path: "DU".into() });
    }

    #[test]
    fn density_is_terminal_measurable_in_exact_arithmetic() {
        let nu = Anticipation::new(vec![q(1, 10), q(3, 10), q(1, 5), q(2, 5)]).unwrap();
        let pt = BinomialMeasure::constant(3, q(51, 109)).unwrap();
        let pnu = minimal_measure(&pt, &nu).unwrap();
        let space = BinomialPaths { periods: 3 };
        let rn = radon_nikodym(&space, &pnu.to_path_measure(), &pt.to_path_measure()).unwrap();
        let terminal = rn.terminal_values().expect("terminal measurable");
        let pt_terminal = pt.terminal_distribution();
        for x in 0..4 {
            assert_eq!(terminal[x], nu.weights()[x].clone() / pt_terminal[x].clone());
        }
        assert_eq!(rn.expectation_under(&pt.to_path_measure()), q(1, 1));
        // a path-dependent density is flagged
        let skew = PathMeasure::new(2, 3, (0..8).map(|p| if p == 1 { q(3, 16) } else if p == 2 { q(1, 16) } else { q(1, 8) }).collect()).unwrap();
        let flat = PathMeasure::new(2, 3, vec![q(1, 8); 8]).unwrap();
        assert!(!radon_nikodym(&space, &skew, &flat).unwrap().is_terminal_measurable());
    }

    #[test]
    fn path_level_minimal_measure_matches_tree() {
        let params = paper_params(3);
        let pt = risk_neutral_binomial(&params).unwrap();
        let nu = Anticipation::new(vec![0.2, 0.4, 0.3, 0.1]).unwrap();
        let tree = minimal_measure(&pt, &nu).unwrap().to_path_measure();
        let space = BinomialPaths { periods: 3 };
        let paths = minimal_measure_paths(&space, &pt.to_path_measure(), &nu).unwrap();
        for (a, b) in tree.probabilities().iter().zip(paths.probabilities()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        let transitions = paths.transitions_at(1);
        let direct = minimal_measure(&pt, &nu).unwrap();
        assert_relative_eq!(transitions[0].as_ref().unwrap()[0], *direct.up_probability(1, 0), epsilon = 1e-14);
        assert_relative_eq!(transitions[1].as_ref().unwrap()[0], *direct.up_probability(1, 1), epsilon = 1e-14);
    }

    #[test]
    fn minimality_one_period_is_equality() {
        let pt = risk_neutral_binomial(&paper_params(1)).unwrap();
        let nu = Anticipation::new(vec![0.3, 0.7]).unwrap();
        let opts = MinimalityOptions { samples: 50, ..Default::default() };
        let report = verify_minimality(&BinomialPaths { periods: 1 }, &pt.to_path_measure(), &nu, &opts).unwrap();
        for o in &report.outcomes {
            assert!(o.worst_margin.abs() < 1e-12, "{o:?}");
        }
    }

    #[test]
    fn minimality_two_periods_uniform_square() {
        let pt = risk_neutral_binomial(&paper_params(2)).unwrap();
        let nu = Anticipation::uniform(3);
        let opts = MinimalityOptions { samples: 10_000, ..Default::default() };
        let report = verify_minimality(&BinomialPaths { periods: 2 }, &pt.to_path_measure(), &nu, &opts).unwrap();
        assert!(report.holds(1e-9));
        // the bridge itself is on the grid, so the minimum is attained
        let square = &report.outcomes[0];
        assert_eq!(square.function, ConvexTest::Square);
        assert!(square.worst_margin.abs() < 1e-9);
    }

    #[test]
    fn minimality_sequential_and_parallel_agree() {
        let pt = risk_neutral_binomial(&paper_params(3)).unwrap();
        let nu = Anticipation::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let space = BinomialPaths { periods: 3 };
        let seq = MinimalityOptions { samples: 500, exec: Exec::Sequential, ..Default::default() };
        let par = MinimalityOptions { exec: Exec::Parallel, ..seq };
        let a = verify_minimality(&space, &pt.to_path_measure(), &nu, &seq).unwrap();
        let b = verify_minimality(&space, &pt.to_path_measure(), &nu, &par).unwrap();
        assert_eq!(a, b);
    }
}
