//! Weak information in the trinomial (incomplete) market.
//!
//! Every one-period martingale law is a mixture `t P₀ + (1-t) P₁` of two
//! extremal laws with one zero entry each. The optimal terminal wealth is
//! `V̂_N(b) = I(Σ_j λ_j P^j(b) / ((1+r)^N ν(b)))`, where `P^j` runs over the
//! `2^N` products of extremal laws and `λ` makes the budget hold under
//! every `P^j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::complete::SolverError;
use crate::market::{build_trinomial_lattice, MarketError, PathSpace, TrinomialLattice, TrinomialParams};
use crate::measures::{Anticipation, MeasureError, PathMeasure};
use crate::par::{ordered_sum, Exec};
use crate::scalar::Scalar;
use crate::utility::Utility;

/// The two extremal one-period laws over `(up, middle, down)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalPair<T = f64> {
    pub p0: [T; 3],
    pub p1: [T; 3],
}

impl<T: Scalar> ExtremalPair<T> {
    /// `P₀` for `bit == 0`, `P₁` otherwise.
    pub fn get(&self, bit: usize) -> &[T; 3] {
        if bit == 0 {
            &self.p0
        } else {
            &self.p1
        }
    }

    /// `t P₀ + (1 - t) P₁`.
    pub fn mixture(&self, t: T) -> [T; 3] {
        let s = T::one() - t.clone();
        [0, 1, 2].map(|o| t.clone() * self.p0[o].clone() + s.clone() * self.p1[o].clone())
    }

    /// Expected gross multiplier under `P₀` or `P₁`.
    pub fn expected_multiplier(&self, bit: usize, a: T, b: T, c: T) -> T {
        let p = self.get(bit);
        p[0].clone() * a + p[1].clone() * b + p[2].clone() * c
    }
}

/// Extremal laws in any field. For `b ≥ 1+r` the law `P₀` avoids the up
/// move, otherwise it avoids the down move; `P₁` always avoids the middle.
pub fn extremal_measures_exact<T: Scalar>(a: T, b: T, c: T, r: T) -> Result<ExtremalPair<T>, MarketError> {
    let rho = T::one() + r;
    if !(a > b && b > c && c > T::zero()) {
        return Err(MarketError::InvalidParameter { name: "a,b,c", reason: "need a > b > c > 0".into() });
    }
    if !(a > rho && rho > c) {
        return Err(MarketError::Arbitrage(format!(
            "need a > 1+r > c, got a = {}, 1+r = {}, c = {}",
            a.to_f64(),
            rho.to_f64(),
            c.to_f64()
        )));
    }
    let p0 = if b >= rho {
        let width = b.clone() - c.clone();
        [T::zero(), (rho.clone() - c.clone()) / width.clone(), (b.clone() - rho.clone()) / width]
    } else {
        let width = a.clone() - b.clone();
        [(rho.clone() - b) / width.clone(), (a.clone() - rho.clone()) / width, T::zero()]
    };
    let width = a.clone() - c.clone();
    let p1 = [(rho.clone() - c) / width.clone(), T::zero(), (a - rho) / width];
    Ok(ExtremalPair { p0, p1 })
}

pub fn extremal_measures(params: &TrinomialParams) -> Result<ExtremalPair<f64>, MarketError> {
    params.validate()?;
    extremal_measures_exact(params.a, params.b, params.c, params.r)
}

/// The `2^N` product measures `P^j = Π_n P_{j_n}`; bit `n` of `j` picks the
/// extremal law used in period `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasureSet {
    pair: ExtremalPair<f64>,
    periods: usize,
}

impl ProductMeasureSet {
    pub fn new(pair: ExtremalPair<f64>, periods: usize) -> Result<Self, MarketError> {
        if periods == 0 || periods > crate::market::TRINOMIAL_PERIOD_CAP {
            return Err(MarketError::PeriodCap { periods, cap: crate::market::TRINOMIAL_PERIOD_CAP });
        }
        Ok(ProductMeasureSet { pair, periods })
    }

    pub fn pair(&self) -> &ExtremalPair<f64> {
        &self.pair
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn len(&self) -> usize {
        1 << self.periods
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn path_count(&self) -> usize {
        3usize.pow(self.periods as u32)
    }

    /// `P^j(path)`.
    pub fn probability(&self, j: usize, path: usize) -> f64 {
        let mut rest = path;
        let mut prob = 1.0;
        for n in 0..self.periods {
            prob *= self.pair.get(j >> n & 1)[rest % 3];
            rest /= 3;
        }
        prob
    }

    pub fn measure(&self, j: usize) -> PathMeasure<f64> {
        let steps: Vec<Vec<f64>> = (0..self.periods).map(|n| self.pair.get(j >> n & 1).to_vec()).collect();
        PathMeasure::product(&steps).expect("extremal laws are probability vectors")
    }

    /// Path law with `t_n P₀ + (1 - t_n) P₁` in period `n`.
    pub fn mixture(&self, t: &[f64]) -> Result<PathMeasure<f64>, MeasureError> {
        if t.len() != self.periods {
            return Err(MeasureError::DimensionMismatch { expected: self.periods, got: t.len() });
        }
        if let Some(bad) = t.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(MeasureError::IndexOutOfRange(format!("mixing weight {bad} is outside [0, 1]")));
        }
        let steps: Vec<Vec<f64>> = t.iter().map(|&tn| self.pair.mixture(tn).to_vec()).collect();
        PathMeasure::product(&steps)
    }

    /// Weights `w_j = Π_n (t_n or 1 - t_n)` with `mixture(t) = Σ_j w_j P^j`.
    pub fn mixture_weights(&self, t: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|j| (0..self.periods).map(|n| if j >> n & 1 == 0 { t[n] } else { 1.0 - t[n] }).product())
            .collect()
    }

    /// Nonzero `(j, P^j(path))` entries for `path`.
    fn support(&self, path: usize) -> Vec<(u32, f64)> {
        let mut entries = vec![(0u32, 1.0)];
        let mut rest = path;
        for n in 0..self.periods {
            let o = rest % 3;
            rest /= 3;
            let mut next = Vec::with_capacity(entries.len() * 2);
            for &(j, p) in &entries {
                for bit in 0..2 {
                    let q = self.pair.get(bit)[o];
                    if q > 0.0 {
                        next.push((j | (bit as u32) << n, p * q));
                    }
                }
            }
            entries = next;
        }
        entries
    }
}

/// Weak information in the trinomial model, either over paths or over
/// terminal nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum TrinomialAnticipation {
    Paths(Anticipation<f64>),
    Terminals(Anticipation<f64>),
}

impl TrinomialAnticipation {
    /// Path-level weights; terminal weights are spread over the paths of
    /// each node in proportion to `reference`.
    pub fn to_paths(&self, lattice: &TrinomialLattice, reference: &PathMeasure<f64>) -> Result<Vec<f64>, MeasureError> {
        let (anticipation, expected) = match self {
            TrinomialAnticipation::Paths(a) => (a, lattice.path_count()),
            TrinomialAnticipation::Terminals(a) => (a, lattice.terminal_count()),
        };
        if anticipation.len() != expected {
            return Err(MeasureError::DimensionMismatch { expected, got: anticipation.len() });
        }
        if let Some(index) = anticipation.weights().iter().position(|w| *w <= 0.0) {
            return Err(MeasureError::ZeroWeight { index });
        }
        match self {
            TrinomialAnticipation::Paths(a) => Ok(a.weights().to_vec()),
            TrinomialAnticipation::Terminals(a) => {
                let terminal = reference.terminal_distribution(lattice);
                Ok((0..lattice.path_count())
                    .map(|path| {
                        let x = lattice.terminal_of(path);
                        a.weights()[x] * reference.probability(path) / terminal[x]
                    })
                    .collect())
            }
        }
    }
}

/// How the Newton step's Jacobian is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Stop once `max_i |budget_i - v| <= tolerance * v`.
    pub tolerance: f64,
    pub max_newton_iterations: usize,
    pub max_descent_sweeps: usize,
    pub jacobian: JacobianMode,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            max_newton_iterations: 200,
            max_descent_sweeps: 20_000,
            jacobian: JacobianMode::Analytic,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Newton,
    CoordinateDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSolution {
    pub lambda: Vec<f64>,
    /// `max_i |budget_i - v|`.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub method: SolveMethod,
}

/// The `λ` system for one market, utility and path-level `ν`.
#[derive(Debug, Clone)]
pub struct TrinomialProblem {
    lattice: TrinomialLattice,
    products: ProductMeasureSet,
    utility: Utility,
    nu: Vec<f64>,
    supports: Vec<Vec<(u32, f64)>>,
}

/// Reference interior measure with `t_n = 1/2` in every period.
pub fn default_mixing(periods: usize) -> Vec<f64> {
    vec![0.5; periods]
}

const CHUNKS: usize = 8;

impl TrinomialProblem {
    pub fn new(params: &TrinomialParams, utility: Utility, anticipation: &TrinomialAnticipation) -> Result<Self, SolverError> {
        utility.validate()?;
        let lattice = build_trinomial_lattice(params)?;
        let products = ProductMeasureSet::new(extremal_measures(params)?, params.periods)?;
        let reference = products.mixture(&default_mixing(params.periods))?;
        let nu = anticipation.to_paths(&lattice, &reference)?;
        let supports = (0..products.path_count()).map(|path| products.support(path)).collect();
        Ok(TrinomialProblem { lattice, products, utility, nu, supports })
    }

    pub fn lattice(&self) -> &TrinomialLattice {
        &self.lattice
    }

    pub fn products(&self) -> &ProductMeasureSet {
        &self.products
    }

    pub fn utility(&self) -> Utility {
        self.utility
    }

    /// `ν` per path.
    pub fn path_anticipation(&self) -> &[f64] {
        &self.nu
    }

    fn params(&self) -> &TrinomialParams {
        self.lattice.params()
    }

    fn discount(&self) -> f64 {
        self.params().growth().powi(self.params().periods as i32)
    }

    fn chunk_bounds(&self, chunk: usize) -> std::ops::Range<usize> {
        let paths = self.supports.len();
        let size = paths.div_ceil(CHUNKS);
        (chunk * size).min(paths)..((chunk + 1) * size).min(paths)
    }

    /// Dual variable `y_b = Σ_j λ_j P^j(b) / ((1+r)^N ν(b))` per path.
    pub fn dual_variables(&self, lambda: &[f64]) -> Vec<f64> {
        let big_r = self.discount();
        self.supports
            .iter()
            .zip(&self.nu)
            .map(|(support, nu)| ordered_sum(support.iter().map(|&(j, p)| lambda[j as usize] * p)) / (big_r * nu))
            .collect()
    }

    fn feasible(y: &[f64]) -> bool {
        y.iter().all(|v| *v > 0.0 && v.is_finite())
    }

    /// `V̂_N` per path for multipliers `λ`.
    pub fn terminal_wealth(&self, lambda: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.dual_variables(lambda)
            .into_iter()
            .map(|y| self.utility.inverse_marginal(y).map_err(SolverError::from))
            .collect()
    }

    /// `(1+r)^{-N} E^{P^i}[V_N]` for every product measure.
    pub fn budgets(&self, wealth: &[f64], exec: Exec) -> Vec<f64> {
        let big_r = self.discount();
        let m = self.products.len();
        let partials = exec.map_range(CHUNKS, |chunk| {
            let mut acc = vec![0.0; m];
            for path in self.chunk_bounds(chunk) {
                for &(j, p) in &self.supports[path] {
                    acc[j as usize] += p * wealth[path];
                }
            }
            acc
        });
        (0..m).map(|i| ordered_sum(partials.iter().map(|acc| acc[i])) / big_r).collect()
    }

    fn residuals(&self, lambda: &[f64], v: f64, exec: Exec) -> Result<Vec<f64>, SolverError> {
        let wealth = self.terminal_wealth(lambda)?;
        Ok(self.budgets(&wealth, exec).into_iter().map(|b| b - v).collect())
    }

    /// Dual objective `v Σ λ_j + Σ_b ν(b) Ũ(y_b)`, whose gradient is minus
    /// the budget residual.
    pub fn dual_objective(&self, lambda: &[f64], v: f64) -> Result<f64, SolverError> {
        let y = self.dual_variables(lambda);
        let mut terms = Vec::with_capacity(y.len());
        for (yb, nu) in y.iter().zip(&self.nu) {
            terms.push(nu * self.utility.conjugate(*yb)?);
        }
        Ok(v * ordered_sum(lambda.iter().copied()) + ordered_sum(terms))
    }

    /// `∂F_i/∂λ_j = (1+r)^{-2N} Σ_b P^i(b) P^j(b) I'(y_b) / ν(b)`.
    pub fn jacobian(&self, lambda: &[f64], exec: Exec) -> Result<DMatrix<f64>, SolverError> {
        let big_r = self.discount();
        let y = self.dual_variables(lambda);
        let mut weights = Vec::with_capacity(y.len());
        for (yb, nu) in y.iter().zip(&self.nu) {
            weights.push(self.utility.inverse_marginal_derivative(*yb)? / (big_r * big_r * nu));
        }
        let m = self.products.len();
        let partials = exec.map_range(CHUNKS, |chunk| {
            let mut acc = DMatrix::<f64>::zeros(m, m);
            for path in self.chunk_bounds(chunk) {
                let support = &self.supports[path];
                for &(i, pi) in support {
                    for &(j, pj) in support {
                        acc[(i as usize, j as usize)] += weights[path] * pi * pj;
                    }
                }
            }
            acc
        });
        let mut total = DMatrix::<f64>::zeros(m, m);
        for partial in partials {
            total += partial;
        }
        Ok(total)
    }

    /// Forward-difference Jacobian of the residual map.
    pub fn jacobian_fd(&self, lambda: &[f64], v: f64, exec: Exec) -> Result<DMatrix<f64>, SolverError> {
        let base = self.residuals(lambda, v, Exec::Sequential)?;
        let m = lambda.len();
        let columns = exec.map_range(m, |j| {
            let mut step = 1e-7 * lambda[j].abs().max(1e-300);
            let mut shifted = lambda.to_vec();
            shifted[j] += step;
            if !Self::feasible(&self.dual_variables(&shifted)) {
                step = -step;
                shifted[j] = lambda[j] + step;
            }
            let r = self.residuals(&shifted, v, Exec::Sequential)?;
            Ok::<_, SolverError>(r.iter().zip(&base).map(|(a, b)| (a - b) / step).collect::<Vec<f64>>())
        });
        let mut jac = DMatrix::zeros(m, m);
        for (j, column) in columns.into_iter().enumerate() {
            for (i, value) in column?.into_iter().enumerate() {
                jac[(i, j)] = value;
            }
        }
        Ok(jac)
    }

    /// `λ_j = μ / 2^N` where `μ` solves the one-dimensional budget under
    /// the `t = 1/2` reference measure; all `y_b` are then positive.
    fn initial_point(&self, v: f64) -> Result<Vec<f64>, SolverError> {
        let m = self.products.len();
        let reference = self.products.mixture(&default_mixing(self.params().periods))?;
        let big_r = self.discount();
        let q = reference.probabilities();
        let budget = |mu: f64| -> Result<f64, SolverError> {
            let mut terms = Vec::with_capacity(q.len());
            for (qb, nu) in q.iter().zip(&self.nu) {
                terms.push(qb * self.utility.inverse_marginal(mu * qb / (big_r * nu))?);
            }
            Ok(ordered_sum(terms) / big_r - v)
        };
        let (mut lo, mut hi) = (1.0, 1.0);
        while budget(hi)? > 0.0 {
            lo = hi;
            hi *= 10.0;
            if hi > 1e300 {
                return Err(SolverError::Bracketing { low: 1.0, high: hi, wealth: v });
            }
        }
        while budget(lo)? < 0.0 {
            hi = lo;
            lo /= 10.0;
            if lo < 1e-300 {
                return Err(SolverError::Bracketing { low: lo, high: 1.0, wealth: v });
            }
        }
        while hi - lo > 1e-14 * hi {
            let mid = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if budget(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(vec![0.5 * (lo + hi) / m as f64; m])
    }

    /// Solves the budget system at initial wealth `v`.
    pub fn solve_lambda(&self, v: f64, options: &SolverOptions) -> Result<LambdaSolution, SolverError> {
        if !v.is_finite() || (self.utility.requires_positive_wealth() && v <= 0.0) {
            return Err(SolverError::Domain(format!("initial wealth {v} is outside the domain of {} utility", self.utility.name())));
        }
        let target = options.tolerance * v.abs().max(f64::MIN_POSITIVE);
        let mut lambda = self.initial_point(v)?;
        let mut history = Vec::new();
        if let Some(solution) = self.newton(&mut lambda, v, target, options, &mut history)? {
            return Ok(solution);
        }
        self.coordinate_descent(lambda, v, target, options, history)
    }

    fn newton(
        &self,
        lambda: &mut Vec<f64>,
        v: f64,
        target: f64,
        options: &SolverOptions,
        history: &mut Vec<f64>,
    ) -> Result<Option<LambdaSolution>, SolverError> {
        let mut objective = self.dual_objective(lambda, v)?;
        for iteration in 0..=options.max_newton_iterations {
            let residual = self.residuals(lambda, v, options.exec)?;
            let norm = residual.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
            history.push(norm);
            if norm <= target {
                return Ok(Some(LambdaSolution {
                    lambda: lambda.clone(),
                    residual: norm,
                    residual_history: history.clone(),
                    iterations: iteration,
                    method: SolveMethod::Newton,
                }));
            }
            if iteration == options.max_newton_iterations {
                break;
            }
            let jac = match options.jacobian {
                JacobianMode::Analytic => self.jacobian(lambda, options.exec)?,
                JacobianMode::FiniteDifference => self.jacobian_fd(lambda, v, options.exec)?,
            };
            // Newton on the residual: J d = -F, a descent direction of the dual
            let rhs = DVector::from_iterator(residual.len(), residual.iter().map(|r| -r));
            let hessian = -jac;
            let Some(step) = hessian.clone().cholesky().map(|c| c.solve(&-&rhs)).or_else(|| hessian.lu().solve(&-&rhs))
            else {
                return Ok(None);
            };
            let slope: f64 = -residual.iter().zip(step.iter()).map(|(r, d)| r * d).sum::<f64>();
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-16 {
                let trial: Vec<f64> = lambda.iter().zip(step.iter()).map(|(l, d)| l + t * d).collect();
                if Self::feasible(&self.dual_variables(&trial)) {
                    let value = self.dual_objective(&trial, v)?;
                    if value <= objective + 1e-4 * t * slope || (value - objective).abs() <= 1e-15 * objective.abs() {
                        *lambda = trial;
                        objective = value;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                return Ok(None);
            }
        }
        Ok(None)
    }

    fn coordinate_descent(
        &self,
        mut lambda: Vec<f64>,
        v: f64,
        target: f64,
        options: &SolverOptions,
        mut history: Vec<f64>,
    ) -> Result<LambdaSolution, SolverError> {
        for sweep in 0..options.max_descent_sweeps {
            for i in 0..lambda.len() {
                // F_i is decreasing in λ_i; bisect on the feasible segment
                let f = |x: f64, lambda: &mut Vec<f64>| -> Result<Option<f64>, SolverError> {
                    lambda[i] = x;
                    if !Self::feasible(&self.dual_variables(lambda)) {
                        return Ok(None);
                    }
                    Ok(Some(self.residuals(lambda, v, Exec::Sequential)?[i]))
                };
                let start = lambda[i];
                let scale = start.abs().max(1e-12);
                let mut lo = start;
                let mut hi = start;
                let mut trial = lambda.clone();
                match f(start, &mut trial)? {
                    Some(r) if r > 0.0 => {
                        let mut width = scale;
                        while f(start + width, &mut trial)?.is_some_and(|r| r > 0.0) {
                            lo = start + width;
                            width *= 2.0;
                        }
                        hi = start + width;
                    }
                    Some(_) => {
                        let mut width = scale;
                        loop {
                            match f(start - width, &mut trial)? {
                                Some(r) if r < 0.0 => {
                                    hi = start - width;
                                    width *= 2.0;
                                }
                                Some(_) => {
                                    lo = start - width;
                                    break;
                                }
                                None => {
                                    width *= 0.5;
                                    if width < 1e-300 {
                                        break;
                                    }
                                }
                            }
                        }
                    }
                    None => {}
                }
                for _ in 0..200 {
                    if hi - lo <= 1e-15 * hi.abs().max(lo.abs()) {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    match f(mid, &mut trial)? {
                        Some(r) if r > 0.0 => lo = mid,
                        Some(_) => hi = mid,
                        None => lo = mid,
                    }
                }
                lambda[i] = 0.5 * (lo + hi);
            }
            let norm = self.residuals(&lambda, v, options.exec)?.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
            history.push(norm);
            if norm <= target {
                return Ok(LambdaSolution {
                    lambda,
                    residual: norm,
                    residual_history: history,
                    iterations: sweep + 1,
                    method: SolveMethod::CoordinateDescent,
                });
            }
        }
        Err(SolverError::NoConvergence { iterations: history.len(), residuals: history })
    }

    /// `E^ν[U(V)]` for path-level wealth `V`.
    pub fn expected_utility(&self, wealth: &[f64]) -> Result<f64, SolverError> {
        let mut terms = Vec::with_capacity(wealth.len());
        for (w, nu) in wealth.iter().zip(&self.nu) {
            terms.push(nu * self.utility.evaluate(*w)?);
        }
        Ok(ordered_sum(terms))
    }
}

/// `V̂_N` per path, the displayed formula `I(Σ_j λ_j P^j / ((1+r)^N ν))`.
pub fn optimal_terminal_wealth_trinomial(problem: &TrinomialProblem, lambda: &[f64]) -> Result<Vec<f64>, SolverError> {
    problem.terminal_wealth(lambda)
}

/// Wealth, holdings and replicability diagnostics on the (non-recombining)
/// trinomial tree; nodes at time `n` are path prefixes in base 3.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrinomialHedge {
    pub wealth: Vec<Vec<f64>>,
    /// Units of stock, from the up/down difference quotient.
    pub delta: Vec<Vec<f64>>,
    pub bond: Vec<Vec<f64>>,
    /// Largest disagreement between the three pairwise quotients, relative
    /// to `max(|δ|, V/S)` at each node.
    pub mismatch: Vec<Vec<f64>>,
    pub worst_mismatch: f64,
    pub worst_node: String,
}

impl TrinomialHedge {
    pub fn is_replicable(&self, tolerance: f64) -> bool {
        self.worst_mismatch <= tolerance
    }
}

fn node_label(n: usize, prefix: usize) -> String {
    let letters: String = (0..n).map(|step| ['U', 'M', 'D'][TrinomialLattice::outcome(prefix, step)]).collect();
    format!("({n}, {})", if letters.is_empty() { "root".to_string() } else { letters })
}

/// Conditional expectations under the interior measure with mixing weights
/// `t`, and the hedge implied by them.
pub fn hedge_tree(lattice: &TrinomialLattice, terminal: &[f64], t: &[f64]) -> Result<TrinomialHedge, SolverError> {
    let params = *lattice.params();
    let periods = params.periods;
    if terminal.len() != lattice.path_count() {
        return Err(MeasureError::DimensionMismatch { expected: lattice.path_count(), got: terminal.len() }.into());
    }
    let products = ProductMeasureSet::new(extremal_measures(&params)?, periods)?;
    products.mixture(t)?;
    let growth = params.growth();
    let mut wealth = vec![terminal.to_vec()];
    for n in (0..periods).rev() {
        let step = products.pair().mixture(t[n]);
        let next = wealth.last().expect("non-empty");
        let width = 3usize.pow(n as u32);
        let level = (0..width)
            .map(|node| ordered_sum((0..3).map(|o| step[o] * next[node + o * width])) / growth)
            .collect();
        wealth.push(level);
    }
    wealth.reverse();
    let mut delta = Vec::with_capacity(periods);
    let mut bond = Vec::with_capacity(periods);
    let mut mismatch = Vec::with_capacity(periods);
    let (mut worst_mismatch, mut worst_node) = (0.0f64, node_label(0, 0));
    for n in 0..periods {
        let width = 3usize.pow(n as u32);
        let (mut d_level, mut b_level, mut m_level) = (Vec::new(), Vec::new(), Vec::new());
        for node in 0..width {
            let v = [0, 1, 2].map(|o| wealth[n + 1][node + o * width]);
            let s = [0, 1, 2].map(|o| lattice.price_at(node + o * width, n + 1));
            let quotient = |i: usize, j: usize| (v[i] - v[j]) / (s[i] - s[j]);
            let d = quotient(0, 2);
            let scale = d.abs().max(wealth[n][node].abs() / lattice.price_at(node, n));
            let gap = [quotient(0, 1), quotient(1, 2)].iter().fold(0.0f64, |acc, q| acc.max((q - d).abs()));
            let relative = if scale > 0.0 { gap / scale } else { gap };
            if relative > worst_mismatch {
                worst_mismatch = relative;
                worst_node = node_label(n, node);
            }
            d_level.push(d);
            b_level.push((v[0] - d * s[0]) / growth.powi(n as i32 + 1));
            m_level.push(relative);
        }
        delta.push(d_level);
        bond.push(b_level);
        mismatch.push(m_level);
    }
    Ok(TrinomialHedge { wealth, delta, bond, mismatch, worst_mismatch, worst_node })
}

/// [`hedge_tree`] that fails when the pairwise quotients disagree by more
/// than `tolerance`.
pub fn trinomial_wealth_and_delta(
    lattice: &TrinomialLattice,
    terminal: &[f64],
    t: &[f64],
    tolerance: f64,
) -> Result<TrinomialHedge, SolverError> {
    let hedge = hedge_tree(lattice, terminal, t)?;
    if !hedge.is_replicable(tolerance) {
        return Err(SolverError::NotReplicable { node: hedge.worst_node.clone(), mismatch: hedge.worst_mismatch });
    }
    Ok(hedge)
}

/// Runs the self-financing strategy with stock holdings from `hedge` along
/// `path`, starting from `v`; returns the terminal wealth.
pub fn simulate_hedge(lattice: &TrinomialLattice, hedge: &TrinomialHedge, path: usize, v: f64) -> f64 {
    let growth = lattice.params().growth();
    let mut wealth = v;
    for n in 0..lattice.params().periods {
        let node = lattice.prefix(path, n);
        let d = hedge.delta[n][node];
        let bond_units = (wealth - d * lattice.price_at(path, n)) / growth.powi(n as i32);
        wealth = bond_units * growth.powi(n as i32 + 1) + d * lattice.price_at(path, n + 1);
    }
    wealth
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrinomialSolution {
    pub lambda: LambdaSolution,
    /// `V̂_N` per path.
    pub terminal_wealth: Vec<f64>,
    /// `E^ν[U(V̂_N)]`.
    pub value: f64,
    pub riskless_utility: f64,
    /// `(1+r)^{-N} E^{P^j}[V̂_N] - v` per product measure.
    pub budget_residuals: Vec<f64>,
    pub hedge: TrinomialHedge,
}

/// Solves for `λ`, evaluates `V̂_N`, and builds the hedge under mixing
/// weights `t` (the replicability outcome is reported, not enforced).
pub fn solve_trinomial(
    problem: &TrinomialProblem,
    v: f64,
    t: &[f64],
    options: &SolverOptions,
) -> Result<TrinomialSolution, SolverError> {
    let lambda = problem.solve_lambda(v, options)?;
    let terminal_wealth = problem.terminal_wealth(&lambda.lambda)?;
    let value = problem.expected_utility(&terminal_wealth)?;
    let riskless_utility = problem.utility().evaluate(v * problem.discount())?;
    let budget_residuals = problem.budgets(&terminal_wealth, options.exec).into_iter().map(|b| b - v).collect();
    let hedge = hedge_tree(problem.lattice(), &terminal_wealth, t)?;
    Ok(TrinomialSolution { lambda, terminal_wealth, value, riskless_utility, budget_residuals, hedge })
}
