//! Market models, recombining lattices and path indexing.
//!
//! Paths are encoded as integers in base `M` (the number of one-period
//! outcomes); digit `n` (least significant first) is the outcome of period
//! `n`. Binomial outcomes are `0 = up`, `1 = down`; trinomial outcomes are
//! `0 = up (a)`, `1 = middle (b)`, `2 = down (c)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on binomial periods (2^N paths are enumerated).
pub const BINOMIAL_PERIOD_CAP: usize = 20;
/// Hard cap on trinomial periods (3^N paths, 2^N product measures).
pub const TRINOMIAL_PERIOD_CAP: usize = 12;
/// Hard cap on the number of paths of a general complete market.
pub const COMPLETE_PATH_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("no-arbitrage condition violated: {0}")]
    Arbitrage(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("{periods} periods exceeds the enumeration cap of {cap}")]
    PeriodCap { periods: usize, cap: usize },
    #[error("one-period price matrix is singular: {0}")]
    Singular(String),
}

fn require(cond: bool, name: &'static str, reason: impl FnOnce() -> String) -> Result<(), MarketError> {
    if cond {
        Ok(())
    } else {
        Err(MarketError::InvalidParameter { name, reason: reason() })
    }
}

fn require_periods(periods: usize, cap: usize) -> Result<(), MarketError> {
    require(periods >= 1, "periods", || "must be at least 1".into())?;
    if periods > cap {
        return Err(MarketError::PeriodCap { periods, cap });
    }
    Ok(())
}

/// One risky asset moving to `S(1+h)` or `S(1-k)` each period, plus a bond
/// growing at `1+r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialParams {
    pub s: f64,
    pub h: f64,
    pub k: f64,
    pub r: f64,
    pub periods: usize,
    pub wealth: f64,
}

impl BinomialParams {
    pub fn new(s: f64, h: f64, k: f64, r: f64, periods: usize, wealth: f64) -> Result<Self, MarketError> {
        let params = BinomialParams { s, h, k, r, periods, wealth };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        require_periods(self.periods, BINOMIAL_PERIOD_CAP)?;
        require(self.s > 0.0 && self.s.is_finite(), "s", || format!("initial price must be > 0, got {}", self.s))?;
        require(self.wealth > 0.0 && self.wealth.is_finite(), "wealth", || {
            format!("initial wealth must be > 0, got {}", self.wealth)
        })?;
        require(1.0 - self.k > 0.0, "k", || format!("1 - k must be > 0, got k = {}", self.k))?;
        let report = validate_no_arbitrage(Model::Binomial(self));
        report.into_result()
    }

    pub fn up_factor(&self) -> f64 {
        1.0 + self.h
    }

    pub fn down_factor(&self) -> f64 {
        1.0 - self.k
    }

    pub fn growth(&self) -> f64 {
        1.0 + self.r
    }

    /// Price after `n` periods with `downs` down-moves.
    pub fn price(&self, n: usize, downs: usize) -> f64 {
        self.s * self.up_factor().powi((n - downs) as i32) * self.down_factor().powi(downs as i32)
    }
}

/// Trinomial model: gross multipliers `a > b > c > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrinomialParams {
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r: f64,
    pub periods: usize,
    pub wealth: f64,
}

impl TrinomialParams {
    pub fn new(s: f64, a: f64, b: f64, c: f64, r: f64, periods: usize, wealth: f64) -> Result<Self, MarketError> {
        let params = TrinomialParams { s, a, b, c, r, periods, wealth };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        require_periods(self.periods, TRINOMIAL_PERIOD_CAP)?;
        require(self.s > 0.0 && self.s.is_finite(), "s", || format!("initial price must be > 0, got {}", self.s))?;
        require(self.wealth > 0.0 && self.wealth.is_finite(), "wealth", || {
            format!("initial wealth must be > 0, got {}", self.wealth)
        })?;
        require(self.c > 0.0, "c", || format!("c must be > 0, got {}", self.c))?;
        require(self.a > self.b && self.b > self.c, "a,b,c", || {
            format!("need a > b > c, got a = {}, b = {}, c = {}", self.a, self.b, self.c)
        })?;
        validate_no_arbitrage(Model::Trinomial(self)).into_result()
    }

    pub fn growth(&self) -> f64 {
        1.0 + self.r
    }

    pub fn multipliers(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn price(&self, ups: usize, mids: usize, downs: usize) -> f64 {
        self.s * self.a.powi(ups as i32) * self.b.powi(mids as i32) * self.c.powi(downs as i32)
    }
}

/// A complete market with `M` one-period states, a bond and `M - 1` risky
/// assets whose gross one-period returns in state `ω` are `returns[ω][j]`.
///
/// The one-period price matrix at a node holding risky prices `S_n` has row
/// `ω` equal to `[(1+r)^(n+1), S_n^1 G[ω][1], ..., S_n^{M-1} G[ω][M-1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteMarketSpec {
    pub initial_prices: Vec<f64>,
    pub returns: Vec<Vec<f64>>,
    pub r: f64,
    pub periods: usize,
    pub wealth: f64,
}

impl CompleteMarketSpec {
    pub fn new(
        initial_prices: Vec<f64>,
        returns: Vec<Vec<f64>>,
        r: f64,
        periods: usize,
        wealth: f64,
    ) -> Result<Self, MarketError> {
        let spec = CompleteMarketSpec { initial_prices, returns, r, periods, wealth };
        spec.validate()?;
        Ok(spec)
    }

    /// The binomial model written as a two-state complete market.
    pub fn from_binomial(params: &BinomialParams) -> Result<Self, MarketError> {
        Self::new(
            vec![params.s],
            vec![vec![params.up_factor()], vec![params.down_factor()]],
            params.r,
            params.periods,
            params.wealth,
        )
    }

    pub fn states(&self) -> usize {
        self.returns.len()
    }

    pub fn growth(&self) -> f64 {
        1.0 + self.r
    }

    pub fn path_count(&self) -> usize {
        self.states().pow(self.periods as u32)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let m = self.states();
        require(m >= 2, "returns", || format!("need at least 2 states, got {m}"))?;
        require(self.initial_prices.len() == m - 1, "initial_prices", || {
            format!("need {} risky prices for {m} states, got {}", m - 1, self.initial_prices.len())
        })?;
        require(self.initial_prices.iter().all(|p| *p > 0.0), "initial_prices", || "prices must be > 0".into())?;
        for (w, row) in self.returns.iter().enumerate() {
            require(row.len() == m - 1, "returns", || {
                format!("state {w} has {} returns, expected {}", row.len(), m - 1)
            })?;
            require(row.iter().all(|g| *g > 0.0), "returns", || format!("state {w} has a non-positive return"))?;
        }
        require(self.wealth > 0.0, "wealth", || format!("initial wealth must be > 0, got {}", self.wealth))?;
        require(self.periods >= 1, "periods", || "must be at least 1".into())?;
        let paths = (m as f64).powi(self.periods as i32);
        if paths > COMPLETE_PATH_CAP as f64 {
            let cap = (COMPLETE_PATH_CAP as f64).ln() / (m as f64).ln();
            return Err(MarketError::PeriodCap { periods: self.periods, cap: cap.floor() as usize });
        }
        if self.one_period_matrix().rank(1e-12) < m {
            return Err(MarketError::Singular("the state-by-asset return matrix has rank < M".into()));
        }
        validate_no_arbitrage(Model::Complete(self)).into_result()
    }

    /// `M x M` matrix with rows `[1, G[ω][..]]`.
    fn one_period_matrix(&self) -> DMatrix<f64> {
        let m = self.states();
        DMatrix::from_fn(m, m, |w, j| if j == 0 { 1.0 } else { self.returns[w][j - 1] })
    }

    /// The unique one-period martingale probabilities, if the return matrix
    /// is invertible (they may be non-positive when arbitrage exists).
    pub fn martingale_probabilities(&self) -> Option<Vec<f64>> {
        let m = self.states();
        let rhs = DVector::from_fn(m, |j, _| if j == 0 { 1.0 } else { self.growth() });
        let q = self.one_period_matrix().transpose().lu().solve(&rhs)?;
        Some(q.iter().copied().collect())
    }

    /// `D_{n+1}` at a node with risky prices `prices` at time `n`.
    pub fn price_matrix(&self, n: usize, prices: &[f64]) -> DMatrix<f64> {
        let m = self.states();
        let bond = self.growth().powi(n as i32 + 1);
        DMatrix::from_fn(m, m, |w, j| if j == 0 { bond } else { prices[j - 1] * self.returns[w][j - 1] })
    }
}

/// Any of the three market models, for admissibility checks.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    Binomial(&'a BinomialParams),
    Trinomial(&'a TrinomialParams),
    Complete(&'a CompleteMarketSpec),
}

/// Outcome of [`validate_no_arbitrage`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ArbitrageReport {
    pub violations: Vec<String>,
}

impl ArbitrageReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), MarketError> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(MarketError::Arbitrage(self.violations.join("; ")))
        }
    }
}

/// Checks that a strictly positive equivalent martingale measure exists.
pub fn validate_no_arbitrage(model: Model<'_>) -> ArbitrageReport {
    let mut violations = Vec::new();
    match model {
        Model::Binomial(p) => {
            if !(p.h > p.r) {
                violations.push(format!("h > r fails (h = {}, r = {})", p.h, p.r));
            }
            if !(p.r > -p.k) {
                violations.push(format!("r > -k fails (r = {}, k = {})", p.r, p.k));
            }
        }
        Model::Trinomial(p) => {
            let rho = p.growth();
            if !(p.a > rho) {
                violations.push(format!("a > 1+r fails (a = {}, 1+r = {rho})", p.a));
            }
            if !(rho > p.c) {
                violations.push(format!("1+r > c fails (1+r = {rho}, c = {})", p.c));
            }
        }
        Model::Complete(spec) => match spec.martingale_probabilities() {
            Some(q) => {
                for (w, qw) in q.iter().enumerate() {
                    if !(*qw > 0.0) {
                        violations.push(format!("martingale probability of state {w} is {qw}, not > 0"));
                    }
                }
            }
            None => violations.push("no unique martingale measure: return matrix is singular".into()),
        },
    }
    ArbitrageReport { violations }
}

/// An enumerable set of paths with a terminal-node labelling.
pub trait PathSpace: Sync {
    /// Number of one-period outcomes.
    fn branching(&self) -> usize;

    fn periods(&self) -> usize;

    fn path_count(&self) -> usize {
        self.branching().pow(self.periods() as u32)
    }

    fn terminal_count(&self) -> usize;

    fn terminal_of(&self, path: usize) -> usize;

    fn path_label(&self, path: usize) -> String;

    /// Outcome of period `n` along `path`.
    fn outcome(&self, path: usize, n: usize) -> usize {
        path / self.branching().pow(n as u32) % self.branching()
    }

    /// `path` truncated to its first `n` periods.
    fn prefix(&self, path: usize, n: usize) -> usize {
        path % self.branching().pow(n as u32)
    }
}

/// Path space of an `N`-period binomial tree, independent of prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinomialPaths {
    pub periods: usize,
}

impl PathSpace for BinomialPaths {
    fn branching(&self) -> usize {
        2
    }

    fn periods(&self) -> usize {
        self.periods
    }

    fn terminal_count(&self) -> usize {
        self.periods + 1
    }

    fn terminal_of(&self, path: usize) -> usize {
        path.count_ones() as usize
    }

    fn path_label(&self, path: usize) -> String {
        (0..self.periods).map(|n| if path >> n & 1 == 0 { 'U' } else { 'D' }).collect()
    }
}

/// Recombining binomial lattice; node `(n, i)` has `i` down-moves.
#[derive(Debug, Clone, PartialEq)]
pub struct BinomialLattice {
    params: BinomialParams,
    prices: Vec<Vec<f64>>,
}

pub fn build_binomial_lattice(params: &BinomialParams) -> Result<BinomialLattice, MarketError> {
    params.validate()?;
    let prices = (0..=params.periods)
        .map(|n| (0..=n).map(|i| params.price(n, i)).collect())
        .collect();
    Ok(BinomialLattice { params: *params, prices })
}

impl BinomialLattice {
    pub fn params(&self) -> &BinomialParams {
        &self.params
    }

    pub fn periods(&self) -> usize {
        self.params.periods
    }

    pub fn price(&self, n: usize, downs: usize) -> f64 {
        self.prices[n][downs]
    }

    pub fn prices_at(&self, n: usize) -> &[f64] {
        &self.prices[n]
    }

    pub fn terminal_prices(&self) -> &[f64] {
        &self.prices[self.periods()]
    }

    pub fn path_count(&self) -> usize {
        1 << self.periods()
    }

    /// Number of down-moves among the first `n` periods of `path`.
    pub fn node_of(path: usize, n: usize) -> usize {
        (path & ((1usize << n) - 1)).count_ones() as usize
    }

    pub fn paths(&self) -> BinomialPaths {
        BinomialPaths { periods: self.periods() }
    }
}

impl PathSpace for BinomialLattice {
    fn branching(&self) -> usize {
        2
    }

    fn periods(&self) -> usize {
        self.params.periods
    }

    fn terminal_count(&self) -> usize {
        self.params.periods + 1
    }

    fn terminal_of(&self, path: usize) -> usize {
        path.count_ones() as usize
    }

    fn path_label(&self, path: usize) -> String {
        self.paths().path_label(path)
    }
}

/// Recombining trinomial lattice; node `(n, up, mid)`.
///
/// Terminal nodes are ordered by `up` ascending then `mid` ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct TrinomialLattice {
    params: TrinomialParams,
    terminals: Vec<(usize, usize)>,
    terminal_lookup: HashMap<(usize, usize), usize>,
}

pub fn build_trinomial_lattice(params: &TrinomialParams) -> Result<TrinomialLattice, MarketError> {
    params.validate()?;
    let n = params.periods;
    let terminals: Vec<(usize, usize)> = (0..=n).flat_map(|up| (0..=n - up).map(move |mid| (up, mid))).collect();
    let terminal_lookup = terminals.iter().enumerate().map(|(i, &node)| (node, i)).collect();
    Ok(TrinomialLattice { params: *params, terminals, terminal_lookup })
}

impl TrinomialLattice {
    pub fn params(&self) -> &TrinomialParams {
        &self.params
    }

    pub fn periods(&self) -> usize {
        self.params.periods
    }

    pub fn path_count(&self) -> usize {
        3usize.pow(self.periods() as u32)
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    /// `(up, mid)` counts of each terminal node.
    pub fn terminal_nodes(&self) -> &[(usize, usize)] {
        &self.terminals
    }

    pub fn terminal_price(&self, index: usize) -> f64 {
        let (up, mid) = self.terminals[index];
        self.params.price(up, mid, self.periods() - up - mid)
    }

    /// Outcome (0 up, 1 middle, 2 down) of period `n` along `path`.
    pub fn outcome(path: usize, n: usize) -> usize {
        path / 3usize.pow(n as u32) % 3
    }

    /// `(up, mid)` counts among the first `n` periods.
    pub fn counts(path: usize, n: usize) -> (usize, usize) {
        let mut up = 0;
        let mut mid = 0;
        let mut rest = path;
        for _ in 0..n {
            match rest % 3 {
                0 => up += 1,
                1 => mid += 1,
                _ => {}
            }
            rest /= 3;
        }
        (up, mid)
    }

    pub fn price_at(&self, path: usize, n: usize) -> f64 {
        let (up, mid) = Self::counts(path, n);
        self.params.price(up, mid, n - up - mid)
    }

    pub fn terminal_index(&self, up: usize, mid: usize) -> Option<usize> {
        self.terminal_lookup.get(&(up, mid)).copied()
    }
}

impl PathSpace for TrinomialLattice {
    fn branching(&self) -> usize {
        3
    }

    fn periods(&self) -> usize {
        self.params.periods
    }

    fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    fn terminal_of(&self, path: usize) -> usize {
        self.terminal_lookup[&Self::counts(path, self.params.periods)]
    }

    fn path_label(&self, path: usize) -> String {
        (0..self.params.periods)
            .map(|n| match Self::outcome(path, n) {
                0 => 'U',
                1 => 'M',
                _ => 'D',
            })
            .collect()
    }
}

/// Enumerated non-recombining tree of a general complete market.
///
/// Terminal classes are state-count vectors, ordered lexicographically with
/// larger counts of earlier states first; for the two-state binomial case
/// class `i` is the node with `i` down-moves.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteLattice {
    spec: CompleteMarketSpec,
    classes: Vec<Vec<usize>>,
    class_lookup: HashMap<Vec<usize>, usize>,
}

pub fn build_complete_lattice(spec: &CompleteMarketSpec) -> Result<CompleteLattice, MarketError> {
    spec.validate()?;
    let mut classes = Vec::new();
    compositions(spec.periods, spec.states(), &mut Vec::new(), &mut classes);
    let class_lookup = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    Ok(CompleteLattice { spec: spec.clone(), classes, class_lookup })
}

fn compositions(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

impl CompleteLattice {
    pub fn spec(&self) -> &CompleteMarketSpec {
        &self.spec
    }

    pub fn periods(&self) -> usize {
        self.spec.periods
    }

    pub fn states(&self) -> usize {
        self.spec.states()
    }

    pub fn path_count(&self) -> usize {
        self.spec.path_count()
    }

    pub fn terminal_classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn outcome(&self, path: usize, n: usize) -> usize {
        path / self.states().pow(n as u32) % self.states()
    }

    /// State counts over the first `n` periods.
    pub fn counts(&self, path: usize, n: usize) -> Vec<usize> {
        let mut counts = vec![0; self.states()];
        for step in 0..n {
            counts[self.outcome(path, step)] += 1;
        }
        counts
    }

    /// Risky prices after the first `n` periods of `path`.
    pub fn prices_at(&self, path: usize, n: usize) -> Vec<f64> {
        let mut prices = self.spec.initial_prices.clone();
        for step in 0..n {
            let w = self.outcome(path, step);
            for (j, p) in prices.iter_mut().enumerate() {
                *p *= self.spec.returns[w][j];
            }
        }
        prices
    }
}

impl PathSpace for CompleteLattice {
    fn branching(&self) -> usize {
        self.spec.states()
    }

    fn periods(&self) -> usize {
        self.spec.periods
    }

    fn terminal_count(&self) -> usize {
        self.classes.len()
    }

    fn terminal_of(&self, path: usize) -> usize {
        self.class_lookup[&self.counts(path, self.spec.periods)]
    }

    fn path_label(&self, path: usize) -> String {
        (0..self.spec.periods).map(|n| self.outcome(path, n).to_string()).collect::<Vec<_>>().join(".")
    }
}
