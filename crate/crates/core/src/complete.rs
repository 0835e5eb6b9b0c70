//! Utility maximization with weak information in complete markets.
//!
//! The investor maximizes `E^ν[U(V_N)]` under the minimal measure `P^ν`;
//! the optimum is `V̂_N = I(λ Z / (1+r)^N)` with `Z = dP̃/dP^ν`, where `λ`
//! solves the budget equation `Ẽ[V̂_N] = v (1+r)^N`.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::market::{
    build_binomial_lattice, build_complete_lattice, BinomialLattice, BinomialParams, CompleteLattice,
    CompleteMarketSpec, MarketError, PathSpace,
};
use crate::measures::{
    minimal_measure_paths, radon_nikodym, risk_neutral_probability, Anticipation, MeasureError, PathMeasure,
};
use crate::par::{ordered_sum, Exec};
use crate::utility::{Utility, UtilityError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("could not bracket λ: budget map scanned over [{low:e}, {high:e}] never reaches v = {wealth:e}")]
    Bracketing { low: f64, high: f64, wealth: f64 },
    #[error("{0}")]
    Domain(String),
    #[error("{0} utility cannot be used with zero-weight anticipations")]
    PruningUnsupported(&'static str),
    #[error("λ system did not converge after {iterations} iterations (final residual {:e})", residuals.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { iterations: usize, residuals: Vec<f64> },
    #[error("terminal wealth is not replicable: at node {node} the difference quotients disagree by {mismatch:e}")]
    NotReplicable { node: String, mismatch: f64 },
    #[error("price matrix at node {0} is singular")]
    Singular(String),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// A complete market: the binomial model or a general `M`-state market.
#[derive(Debug, Clone, PartialEq)]
pub enum CompleteMarket {
    Binomial(BinomialLattice),
    General(CompleteLattice),
}

impl CompleteMarket {
    pub fn binomial(params: &BinomialParams) -> Result<Self, MarketError> {
        Ok(CompleteMarket::Binomial(build_binomial_lattice(params)?))
    }

    pub fn general(spec: &CompleteMarketSpec) -> Result<Self, MarketError> {
        Ok(CompleteMarket::General(build_complete_lattice(spec)?))
    }

    pub fn growth(&self) -> f64 {
        match self {
            CompleteMarket::Binomial(l) => l.params().growth(),
            CompleteMarket::General(l) => l.spec().growth(),
        }
    }

    pub fn wealth(&self) -> f64 {
        match self {
            CompleteMarket::Binomial(l) => l.params().wealth,
            CompleteMarket::General(l) => l.spec().wealth,
        }
    }

    /// Number of risky assets.
    pub fn assets(&self) -> usize {
        self.branching() - 1
    }

    /// One-period martingale probabilities, identical at every node.
    pub fn martingale_step(&self) -> Vec<f64> {
        match self {
            CompleteMarket::Binomial(l) => {
                let p = l.params();
                let up = risk_neutral_probability(p.h, p.k, p.r);
                vec![up, 1.0 - up]
            }
            CompleteMarket::General(l) => l.spec().martingale_probabilities().expect("validated market is nonsingular"),
        }
    }

    pub fn risk_neutral(&self) -> PathMeasure<f64> {
        let step = self.martingale_step();
        PathMeasure::product(&vec![step; self.periods()]).expect("martingale step is a probability vector")
    }

    /// Nodes at time `n`: recombining for the binomial model, path prefixes
    /// otherwise.
    pub fn node_count(&self, n: usize) -> usize {
        match self {
            CompleteMarket::Binomial(_) => n + 1,
            CompleteMarket::General(l) => l.states().pow(n as u32),
        }
    }

    pub fn node_of(&self, path: usize, n: usize) -> usize {
        match self {
            CompleteMarket::Binomial(_) => BinomialLattice::node_of(path, n),
            CompleteMarket::General(l) => l.prefix(path, n),
        }
    }

    /// Node reached from `node` at time `n` by outcome `w`.
    pub fn child(&self, n: usize, node: usize, w: usize) -> usize {
        match self {
            CompleteMarket::Binomial(_) => node + w,
            CompleteMarket::General(l) => node + w * l.states().pow(n as u32),
        }
    }

    pub fn risky_prices(&self, n: usize, node: usize) -> Vec<f64> {
        match self {
            CompleteMarket::Binomial(l) => vec![l.price(n, node)],
            CompleteMarket::General(l) => l.prices_at(node, n),
        }
    }

    pub fn node_label(&self, n: usize, node: usize) -> String {
        match self {
            CompleteMarket::Binomial(_) => format!("({n}, {node})"),
            CompleteMarket::General(l) => {
                let digits: Vec<String> = (0..n).map(|step| l.outcome(node, step).to_string()).collect();
                format!("({n}, [{}])", digits.join("."))
            }
        }
    }
}

impl PathSpace for CompleteMarket {
    fn branching(&self) -> usize {
        match self {
            CompleteMarket::Binomial(l) => PathSpace::branching(l),
            CompleteMarket::General(l) => PathSpace::branching(l),
        }
    }

    fn periods(&self) -> usize {
        match self {
            CompleteMarket::Binomial(l) => l.periods(),
            CompleteMarket::General(l) => l.periods(),
        }
    }

    fn terminal_count(&self) -> usize {
        match self {
            CompleteMarket::Binomial(l) => PathSpace::terminal_count(l),
            CompleteMarket::General(l) => PathSpace::terminal_count(l),
        }
    }

    fn terminal_of(&self, path: usize) -> usize {
        match self {
            CompleteMarket::Binomial(l) => l.terminal_of(path),
            CompleteMarket::General(l) => l.terminal_of(path),
        }
    }

    fn path_label(&self, path: usize) -> String {
        match self {
            CompleteMarket::Binomial(l) => l.path_label(path),
            CompleteMarket::General(l) => l.path_label(path),
        }
    }
}

/// How `λ` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMethod {
    /// Explicit formulas in the relative entropy / power moments of `ν`.
    #[default]
    ClosedForm,
    /// Bracketing and bisection on the path-level budget map.
    Generic,
}

/// `π = F / u`, undefined when `u` is zero or not finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "value")]
pub enum Proportion {
    Defined(f64),
    Undefined,
}

impl Proportion {
    pub fn value(self) -> Option<f64> {
        match self {
            Proportion::Defined(x) => Some(x),
            Proportion::Undefined => None,
        }
    }

    fn from_parts(additional: f64, u: f64) -> Self {
        if u == 0.0 || !u.is_finite() || !additional.is_finite() {
            Proportion::Undefined
        } else {
            Proportion::Defined(additional / u)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueReport {
    pub lambda: f64,
    /// `u(v, ν)`.
    pub value: f64,
    /// `U(v (1+r)^N)`, the utility of the risk-free strategy.
    pub riskless_utility: f64,
    /// `F(v, ν) = u - U(v (1+r)^N)`.
    pub additional: f64,
    pub proportion: Proportion,
}

impl ValueReport {
    fn new(lambda: f64, value: f64, riskless_utility: f64) -> Self {
        let additional = value - riskless_utility;
        ValueReport { lambda, value, riskless_utility, additional, proportion: Proportion::from_parts(additional, value) }
    }
}

/// Wealth `V̂_n` per node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WealthTree {
    pub levels: Vec<Vec<f64>>,
}

impl WealthTree {
    pub fn root(&self) -> f64 {
        self.levels[0][0]
    }
}

/// Holdings per node: `bond[n][node]` units of the bond (worth `(1+r)^n`
/// at time `n`) and `risky[n][node][j]` units of asset `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioTree {
    pub bond: Vec<Vec<f64>>,
    pub risky: Vec<Vec<Vec<f64>>>,
}

impl PortfolioTree {
    /// Units of the first risky asset at `(n, node)`.
    pub fn delta(&self, n: usize, node: usize) -> f64 {
        self.risky[n][node][0]
    }

    pub fn deltas(&self) -> Vec<Vec<f64>> {
        self.risky.iter().map(|level| level.iter().map(|h| h[0]).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompleteSolution {
    pub report: ValueReport,
    /// `V̂_N` per terminal node.
    pub terminal_wealth: Vec<f64>,
    pub wealth: WealthTree,
    pub portfolio: PortfolioTree,
}

/// Everything needed to solve one (market, utility, ν) problem for any `v`.
#[derive(Debug, Clone)]
pub struct CompleteSolver {
    market: CompleteMarket,
    utility: Utility,
    anticipation: Anticipation<f64>,
    risk_neutral: PathMeasure<f64>,
    minimal: PathMeasure<f64>,
    /// `P̃(S_N = x)`.
    terminal_risk_neutral: Vec<f64>,
    exec: Exec,
}

impl CompleteSolver {
    pub fn new(market: CompleteMarket, utility: Utility, anticipation: Anticipation<f64>) -> Result<Self, SolverError> {
        utility.validate()?;
        if anticipation.support().len() < anticipation.len() && !utility.requires_positive_wealth() {
            return Err(SolverError::PruningUnsupported(utility.name()));
        }
        let risk_neutral = market.risk_neutral();
        let minimal = minimal_measure_paths(&market, &risk_neutral, &anticipation)?;
        let terminal_risk_neutral = risk_neutral.terminal_distribution(&market);
        Ok(CompleteSolver { market, utility, anticipation, risk_neutral, minimal, terminal_risk_neutral, exec: Exec::default() })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn market(&self) -> &CompleteMarket {
        &self.market
    }

    pub fn utility(&self) -> Utility {
        self.utility
    }

    pub fn anticipation(&self) -> &Anticipation<f64> {
        &self.anticipation
    }

    pub fn risk_neutral(&self) -> &PathMeasure<f64> {
        &self.risk_neutral
    }

    pub fn minimal(&self) -> &PathMeasure<f64> {
        &self.minimal
    }

    pub fn terminal_risk_neutral(&self) -> &[f64] {
        &self.terminal_risk_neutral
    }

    fn discount(&self) -> f64 {
        self.market.growth().powi(self.market.periods() as i32)
    }

    fn check_wealth(&self, v: f64) -> Result<(), SolverError> {
        if !v.is_finite() || (self.utility.requires_positive_wealth() && v <= 0.0) {
            return Err(SolverError::Domain(format!("initial wealth {v} is outside the domain of {} utility", self.utility.name())));
        }
        Ok(())
    }

    /// `dP̃/dP^ν` per terminal node; infinite where `ν` is zero.
    pub fn terminal_density(&self) -> Vec<f64> {
        self.terminal_risk_neutral
            .iter()
            .zip(self.anticipation.weights())
            .map(|(p, nu)| if *nu == 0.0 { f64::INFINITY } else { p / nu })
            .collect()
    }

    fn wealth_at(&self, lambda: f64, z: f64) -> Result<f64, SolverError> {
        if z.is_infinite() {
            return Ok(0.0);
        }
        Ok(self.utility.inverse_marginal(lambda * z / self.discount())?)
    }

    /// Solves the budget equation for `λ`.
    pub fn solve_lambda(&self, v: f64, method: LambdaMethod) -> Result<f64, SolverError> {
        self.check_wealth(v)?;
        match method {
            LambdaMethod::ClosedForm => Ok(self.closed_form(v).lambda),
            LambdaMethod::Generic => self.generic_lambda(v),
        }
    }

    fn closed_form(&self, v: f64) -> ValueReport {
        let big_r = self.discount();
        let riskless = v * big_r;
        let p = &self.terminal_risk_neutral;
        let nu = self.anticipation.weights();
        match self.utility {
            Utility::Log => {
                let kl = ordered_sum(nu.iter().zip(p).filter(|(n, _)| **n > 0.0).map(|(n, q)| n * (n / q).ln()));
                ValueReport::new(1.0 / v, riskless.ln() + kl, riskless.ln())
            }
            Utility::Power { gamma } => {
                let e = gamma / (gamma - 1.0);
                let moment = ordered_sum(nu.iter().zip(p).filter(|(n, _)| **n > 0.0).map(|(n, q)| n * (q / n).powf(e)));
                let lambda = (v * big_r.powf(e) / moment).powf(gamma - 1.0);
                let base = riskless.powf(gamma) / gamma;
                ValueReport::new(lambda, base * moment.powf(1.0 - gamma), base)
            }
            Utility::Exponential { alpha } => {
                let k = ordered_sum(p.iter().zip(nu).map(|(q, n)| q * (q / n).ln()));
                let lambda = alpha * big_r * (-v * alpha * big_r - k).exp();
                ValueReport::new(lambda, -(-v * alpha * big_r - k).exp(), -(-alpha * riskless).exp())
            }
        }
    }

    /// `Z = dP̃/dP^ν` per path, from the path-level Radon-Nikodym derivative.
    fn path_density(&self) -> Result<Vec<f64>, SolverError> {
        let rn = radon_nikodym(&self.market, &self.minimal, &self.risk_neutral)?;
        Ok(rn.ratios().iter().map(|r| if *r == 0.0 { f64::INFINITY } else { 1.0 / r }).collect())
    }

    fn budget(&self, lambda: f64, density: &[f64]) -> Result<f64, SolverError> {
        let p = self.risk_neutral.probabilities();
        let terms = self.exec.map_range(p.len(), |path| self.wealth_at(lambda, density[path]).map(|w| p[path] * w));
        Ok(ordered_sum(terms.into_iter().collect::<Result<Vec<_>, _>>()?) / self.discount())
    }

    fn budget_slope(&self, lambda: f64, density: &[f64]) -> Result<f64, SolverError> {
        let big_r = self.discount();
        let p = self.risk_neutral.probabilities();
        let mut terms = Vec::with_capacity(p.len());
        for (path, z) in density.iter().enumerate() {
            if z.is_finite() {
                terms.push(p[path] * self.utility.inverse_marginal_derivative(lambda * z / big_r)? * z / big_r);
            }
        }
        Ok(ordered_sum(terms) / big_r)
    }

    fn generic_lambda(&self, v: f64) -> Result<f64, SolverError> {
        let density = self.path_density()?;
        let f = |lambda: f64| self.budget(lambda, &density).map(|b| b - v);
        // budget map is decreasing in λ
        let (mut lo, mut hi) = (1.0, 1.0);
        let start = f(1.0)?;
        if start > 0.0 {
            while f(hi)? > 0.0 {
                lo = hi;
                hi *= 10.0;
                if hi > 1e300 {
                    return Err(SolverError::Bracketing { low: 1.0, high: hi, wealth: v });
                }
            }
        } else {
            while f(lo)? < 0.0 {
                hi = lo;
                lo /= 10.0;
                if lo < 1e-300 {
                    return Err(SolverError::Bracketing { low: lo, high: 1.0, wealth: v });
                }
            }
        }
        while hi - lo > 1e-12 * hi {
            let mid = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if f(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        let residual = f(lambda)?;
        let slope = self.budget_slope(lambda, &density)?;
        if slope != 0.0 {
            let polished = lambda - residual / slope;
            if polished > 0.0 && f(polished)?.abs() < residual.abs() {
                return Ok(polished);
            }
        }
        Ok(lambda)
    }

    /// `V̂_N` per terminal node.
    pub fn optimal_terminal_wealth(&self, lambda: f64) -> Result<Vec<f64>, SolverError> {
        self.terminal_density().into_iter().map(|z| self.wealth_at(lambda, z)).collect()
    }

    /// `(u, F, π)` at initial wealth `v`.
    pub fn value_of_information(&self, v: f64, method: LambdaMethod) -> Result<ValueReport, SolverError> {
        self.check_wealth(v)?;
        match method {
            LambdaMethod::ClosedForm => Ok(self.closed_form(v)),
            LambdaMethod::Generic => {
                let lambda = self.generic_lambda(v)?;
                let density = self.path_density()?;
                let q = self.minimal.probabilities();
                let mut terms = Vec::with_capacity(q.len());
                for (path, z) in density.iter().enumerate() {
                    if q[path] > 0.0 {
                        terms.push(q[path] * self.utility.evaluate(self.wealth_at(lambda, *z)?)?);
                    }
                }
                let riskless = self.utility.evaluate(v * self.discount())?;
                Ok(ValueReport::new(lambda, ordered_sum(terms), riskless))
            }
        }
    }

    /// `V̂_n = (1+r)^{-(N-n)} Ẽ[V̂_N | node]` by backward induction.
    pub fn optimal_wealth_process(&self, lambda: f64) -> Result<WealthTree, SolverError> {
        let periods = self.market.periods();
        let terminal = self.optimal_terminal_wealth(lambda)?;
        let last: Vec<f64> = match &self.market {
            CompleteMarket::Binomial(_) => terminal,
            CompleteMarket::General(_) => {
                (0..self.market.path_count()).map(|path| terminal[self.market.terminal_of(path)]).collect()
            }
        };
        let step = self.market.martingale_step();
        let growth = self.market.growth();
        let mut levels = vec![last];
        for n in (0..periods).rev() {
            let next = levels.last().expect("non-empty");
            let level = (0..self.market.node_count(n))
                .map(|node| {
                    let expected = step.iter().enumerate().map(|(w, q)| q * next[self.market.child(n, node, w)]);
                    ordered_sum(expected) / growth
                })
                .collect();
            levels.push(level);
        }
        levels.reverse();
        Ok(WealthTree { levels })
    }

    /// Holdings solving `D_{n+1} h = V̂_{n+1}` at every node.
    pub fn replicate_portfolio(&self, tree: &WealthTree) -> Result<PortfolioTree, SolverError> {
        let periods = self.market.periods();
        let growth = self.market.growth();
        let mut bond = Vec::with_capacity(periods);
        let mut risky = Vec::with_capacity(periods);
        for n in 0..periods {
            let bond_next = growth.powi(n as i32 + 1);
            let mut level_bond = Vec::new();
            let mut level_risky = Vec::new();
            for node in 0..self.market.node_count(n) {
                match &self.market {
                    CompleteMarket::Binomial(l) => {
                        let (up, down) = (tree.levels[n + 1][node], tree.levels[n + 1][node + 1]);
                        let (s_up, s_down) = (l.price(n + 1, node), l.price(n + 1, node + 1));
                        let delta = (up - down) / (s_up - s_down);
                        level_bond.push((up - delta * s_up) / bond_next);
                        level_risky.push(vec![delta]);
                    }
                    CompleteMarket::General(l) => {
                        let m = l.states();
                        let d = l.spec().price_matrix(n, &self.market.risky_prices(n, node));
                        let target = DVector::from_fn(m, |w, _| tree.levels[n + 1][self.market.child(n, node, w)]);
                        let h = d
                            .lu()
                            .solve(&target)
                            .ok_or_else(|| SolverError::Singular(self.market.node_label(n, node)))?;
                        level_bond.push(h[0]);
                        level_risky.push(h.iter().skip(1).copied().collect());
                    }
                }
            }
            bond.push(level_bond);
            risky.push(level_risky);
        }
        Ok(PortfolioTree { bond, risky })
    }

    /// Runs the self-financing strategy with risky holdings from `portfolio`
    /// along `path`, starting from `v`; returns the terminal wealth.
    pub fn simulate(&self, portfolio: &PortfolioTree, path: usize, v: f64) -> f64 {
        let growth = self.market.growth();
        let mut wealth = v;
        for n in 0..self.market.periods() {
            let node = self.market.node_of(path, n);
            let holdings = &portfolio.risky[n][node];
            let prices = self.market.risky_prices(n, node);
            let cost: f64 = holdings.iter().zip(&prices).map(|(h, s)| h * s).sum();
            let bond_units = (wealth - cost) / growth.powi(n as i32);
            let next = self.market.node_of(path, n + 1);
            let next_prices = self.market.risky_prices(n + 1, next);
            let carried: f64 = holdings.iter().zip(&next_prices).map(|(h, s)| h * s).sum();
            wealth = bond_units * growth.powi(n as i32 + 1) + carried;
        }
        wealth
    }

    /// `λ`, `(u, F, π)`, the wealth tree and the replicating portfolio.
    pub fn solve(&self, v: f64, method: LambdaMethod) -> Result<CompleteSolution, SolverError> {
        let report = self.value_of_information(v, method)?;
        let terminal_wealth = self.optimal_terminal_wealth(report.lambda)?;
        let wealth = self.optimal_wealth_process(report.lambda)?;
        let portfolio = self.replicate_portfolio(&wealth)?;
        Ok(CompleteSolution { report, terminal_wealth, wealth, portfolio })
    }
}

/// One-period optimal risky holding at a node with price `s`, wealth `v`
/// and anticipated up/down probabilities `nu_up`, `nu_down`.
#[allow(clippy::too_many_arguments)]
pub fn one_period_delta(
    utility: Utility,
    s: f64,
    v: f64,
    h: f64,
    k: f64,
    r: f64,
    nu_up: f64,
    nu_down: f64,
) -> Result<f64, SolverError> {
    utility.validate()?;
    let up_excess = nu_up * (h - r);
    let down_excess = nu_down * (k + r);
    match utility {
        Utility::Log => Ok(v * (1.0 + r) * (up_excess - down_excess) / (s * (h - r) * (k + r))),
        Utility::Power { gamma } => {
            let e = -1.0 / (gamma - 1.0);
            let (a, b) = (up_excess.powf(e), down_excess.powf(e));
            Ok(v * (1.0 + r) * (a - b) / (s * ((h - r) * b + (k + r) * a)))
        }
        Utility::Exponential { alpha } => {
            if up_excess <= 0.0 || down_excess <= 0.0 {
                return Err(SolverError::Domain(format!(
                    "log of a nonpositive quantity: ν0(h-r) = {up_excess}, ν1(k+r) = {down_excess}"
                )));
            }
            Ok((up_excess.ln() - down_excess.ln()) / (alpha * s * (h + k)))
        }
    }
}

/// Closed-form `δ̂₀` of a one-period binomial market.
pub fn single_period_closed_form(
    utility: Utility,
    params: &BinomialParams,
    anticipation: &Anticipation<f64>,
) -> Result<f64, SolverError> {
    params.validate()?;
    if params.periods != 1 {
        return Err(SolverError::Domain(format!("one-period formula needs N = 1, got N = {}", params.periods)));
    }
    if anticipation.len() != 2 {
        return Err(MeasureError::DimensionMismatch { expected: 2, got: anticipation.len() }.into());
    }
    let nu = anticipation.weights();
    one_period_delta(utility, params.s, params.wealth, params.h, params.k, params.r, nu[0], nu[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paper(periods: usize) -> BinomialParams {
        BinomialParams::new(20.0, 0.09, 0.019, 0.032, periods, 200.0).unwrap()
    }

    fn solver(periods: usize, utility: Utility, nu: Vec<f64>) -> CompleteSolver {
        CompleteSolver::new(CompleteMarket::binomial(&paper(periods)).unwrap(), utility, Anticipation::new(nu).unwrap())
            .unwrap()
    }

    #[test]
    fn single_period_log_delta() {
        let nu = Anticipation::new(vec![0.5, 0.5]).unwrap();
        let d = single_period_closed_form(Utility::Log, &paper(1), &nu).unwrap();
        assert!((d - 12.21095).abs() < 1e-4);
        let s = solver(1, Utility::Log, vec![0.5, 0.5]).solve(200.0, LambdaMethod::ClosedForm).unwrap();
        assert_relative_eq!(s.portfolio.delta(0, 0), d, max_relative = 1e-12);
    }

    #[test]
    fn single_period_zero_delta_at_risk_neutral_odds() {
        let p = risk_neutral_probability(0.09, 0.019, 0.032);
        for u in [Utility::Log, Utility::Power { gamma: 0.5 }, Utility::Exponential { alpha: 1.0 }] {
            let nu = Anticipation::new(vec![p, 1.0 - p]).unwrap();
            assert!(single_period_closed_form(u, &paper(1), &nu).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn single_period_formulas_match_pipeline() {
        for u in [Utility::Power { gamma: 0.5 }, Utility::Power { gamma: -2.0 }, Utility::Exponential { alpha: 0.01 }] {
            let nu = Anticipation::new(vec![0.7, 0.3]).unwrap();
            let closed = single_period_closed_form(u, &paper(1), &nu).unwrap();
            let s = solver(1, u, vec![0.7, 0.3]).solve(200.0, LambdaMethod::Generic).unwrap();
            assert_relative_eq!(s.portfolio.delta(0, 0), closed, max_relative = 1e-9);
        }
    }

    #[test]
    fn exponential_single_period_domain_error() {
        let nu = Anticipation::with_pruning(vec![0.0, 1.0]).unwrap();
        let err = single_period_closed_form(Utility::Exponential { alpha: 1.0 }, &paper(1), &nu).unwrap_err();
        assert!(matches!(err, SolverError::Domain(_)));
    }

    #[test]
    fn log_lambda_and_terminal_wealth() {
        let s = solver(3, Utility::Log, vec![0.25; 4]);
        assert_eq!(s.solve_lambda(200.0, LambdaMethod::ClosedForm).unwrap(), 0.005);
        assert_relative_eq!(s.solve_lambda(200.0, LambdaMethod::Generic).unwrap(), 0.005, max_relative = 1e-10);
        let wealth = s.optimal_terminal_wealth(0.005).unwrap();
        let big_r = 1.032f64.powi(3);
        for (x, w) in wealth.iter().enumerate() {
            assert_relative_eq!(*w, 200.0 * big_r * 0.25 / s.terminal_risk_neutral()[x], max_relative = 1e-12);
        }
    }

    #[test]
    fn risk_neutral_anticipation_is_worthless() {
        let pt = CompleteMarket::binomial(&paper(4)).unwrap().risk_neutral();
        let market = CompleteMarket::binomial(&paper(4)).unwrap();
        let nu = pt.terminal_distribution(&market);
        for u in [Utility::Log, Utility::Power { gamma: 0.3 }, Utility::Exponential { alpha: 0.02 }] {
            let s = CompleteSolver::new(market.clone(), u, Anticipation::new(nu.clone()).unwrap()).unwrap();
            let r = s.value_of_information(200.0, LambdaMethod::ClosedForm).unwrap();
            assert!(r.additional.abs() < 1e-10 * r.value.abs().max(1.0), "{u:?}: {r:?}");
            let lambda = s.solve_lambda(200.0, LambdaMethod::Generic).unwrap();
            for w in s.optimal_terminal_wealth(lambda).unwrap() {
                assert_relative_eq!(w, 200.0 * 1.032f64.powi(4), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn closed_form_and_generic_agree() {
        for u in [Utility::Log, Utility::Power { gamma: 0.5 }, Utility::Power { gamma: -1.5 }, Utility::Exponential { alpha: 0.005 }] {
            let s = solver(3, u, vec![0.2, 0.4, 0.3, 0.1]);
            let a = s.value_of_information(200.0, LambdaMethod::ClosedForm).unwrap();
            let b = s.value_of_information(200.0, LambdaMethod::Generic).unwrap();
            assert_relative_eq!(a.lambda, b.lambda, max_relative = 1e-9);
            assert_relative_eq!(a.value, b.value, max_relative = 1e-9);
            assert_relative_eq!(a.additional, b.additional, max_relative = 1e-8);
        }
    }

    #[test]
    fn general_market_matches_binomial() {
        let params = paper(3);
        let general = CompleteMarket::general(&CompleteMarketSpec::from_binomial(&params).unwrap()).unwrap();
        let nu = vec![0.2, 0.4, 0.3, 0.1];
        let a = solver(3, Utility::Log, nu.clone()).solve(200.0, LambdaMethod::ClosedForm).unwrap();
        let b = CompleteSolver::new(general.clone(), Utility::Log, Anticipation::new(nu).unwrap())
            .unwrap()
            .solve(200.0, LambdaMethod::ClosedForm)
            .unwrap();
        assert_relative_eq!(a.report.value, b.report.value, max_relative = 1e-12);
        for path in 0..8 {
            for n in 0..3 {
                let da = a.portfolio.delta(n, BinomialLattice::node_of(path, n));
                let db = b.portfolio.delta(n, general.node_of(path, n));
                assert_relative_eq!(da, db, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn replication_and_martingale() {
        let s = solver(3, Utility::Power { gamma: 0.5 }, vec![0.1, 0.2, 0.3, 0.4]);
        let sol = s.solve(200.0, LambdaMethod::ClosedForm).unwrap();
        assert_relative_eq!(sol.wealth.root(), 200.0, max_relative = 1e-10);
        for path in 0..8 {
            let simulated = s.simulate(&sol.portfolio, path, 200.0);
            assert_relative_eq!(simulated, sol.terminal_wealth[s.market().terminal_of(path)], max_relative = 1e-9);
        }
    }

    #[test]
    fn pruning() {
        let market = CompleteMarket::binomial(&paper(2)).unwrap();
        let nu = Anticipation::with_pruning(vec![0.5, 0.5, 0.0]).unwrap();
        let s = CompleteSolver::new(market.clone(), Utility::Log, nu.clone()).unwrap();
        let sol = s.solve(200.0, LambdaMethod::ClosedForm).unwrap();
        assert_eq!(sol.terminal_wealth[2], 0.0);
        assert_relative_eq!(sol.wealth.root(), 200.0, max_relative = 1e-12);
        let generic = s.value_of_information(200.0, LambdaMethod::Generic).unwrap();
        assert_relative_eq!(generic.value, sol.report.value, max_relative = 1e-9);
        let err = CompleteSolver::new(market, Utility::Exponential { alpha: 1.0 }, nu).unwrap_err();
        assert_eq!(err, SolverError::PruningUnsupported("exponential"));
    }

    #[test]
    fn proportion_undefined_at_zero() {
        assert_eq!(Proportion::from_parts(0.0, 0.0), Proportion::Undefined);
        assert_eq!(Proportion::from_parts(1.0, f64::INFINITY), Proportion::Undefined);
        assert_eq!(Proportion::from_parts(1.0, 4.0), Proportion::Defined(0.25));
    }

    #[test]
    fn rejects_wealth_outside_domain() {
        let s = solver(2, Utility::Log, vec![0.3, 0.3, 0.4]);
        assert!(matches!(s.solve_lambda(-1.0, LambdaMethod::Generic), Err(SolverError::Domain(_))));
        let e = solver(2, Utility::Exponential { alpha: 0.1 }, vec![0.3, 0.3, 0.4]);
        assert!(e.solve_lambda(-1.0, LambdaMethod::Generic).is_ok());
    }
}
