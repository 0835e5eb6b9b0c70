//! Value curves `u, F, π` over a wealth grid for several anticipations.

use serde::{Deserialize, Serialize};

use crate::complete::{CompleteMarket, CompleteSolver, LambdaMethod, Proportion, SolverError};
use crate::market::PathSpace;
use crate::measures::Anticipation;
use crate::par::Exec;
use crate::utility::Utility;

/// Built-in anticipations of a 5-period binomial terminal price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Precise,
    Uniform,
    Conservative,
    RiskNeutral,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Precise, Preset::Uniform, Preset::Conservative, Preset::RiskNeutral];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Precise => "precise",
            Preset::Uniform => "uniform",
            Preset::Conservative => "conservative",
            Preset::RiskNeutral => "risk-neutral",
        }
    }

    /// Weights for `market`; only `risk-neutral` and `uniform` adapt to the
    /// number of terminal nodes, the other two need exactly six.
    pub fn anticipation(self, market: &CompleteMarket) -> Result<Anticipation<f64>, SolverError> {
        let terminals = market.terminal_count();
        let weights = match self {
            Preset::Precise => vec![0.01, 0.01, 0.01, 0.95, 0.01, 0.01],
            Preset::Conservative => vec![0.1, 0.2, 0.2, 0.2, 0.2, 0.1],
            Preset::Uniform => return Ok(Anticipation::uniform(terminals)),
            Preset::RiskNeutral => market.risk_neutral().terminal_distribution(market),
        };
        if weights.len() != terminals {
            return Err(SolverError::Domain(format!(
                "preset `{}` has {} weights but the market has {terminals} terminal nodes",
                self.name(),
                weights.len()
            )));
        }
        Ok(Anticipation::new(weights)?)
    }
}

/// A named anticipation in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedAnticipation {
    pub name: String,
    pub anticipation: Anticipation<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub anticipation: String,
    pub wealth: f64,
    pub lambda: f64,
    pub value: f64,
    pub additional: f64,
    pub proportion: Proportion,
}

/// A row that failed, tagged with its position in the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub anticipation: String,
    pub wealth: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

impl SweepTable {
    pub fn curve(&self, anticipation: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.anticipation == anticipation).collect()
    }
}

/// `count` evenly spaced points in `[low, high]`.
pub fn linear_grid(low: f64, high: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![low],
        _ => (0..count).map(|i| low + (high - low) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Solves every `(anticipation, v)` pair; rows come out anticipation-major
/// in input order regardless of `exec`.
pub fn sweep(
    market: &CompleteMarket,
    utility: Utility,
    anticipations: &[NamedAnticipation],
    grid: &[f64],
    method: LambdaMethod,
    exec: Exec,
) -> SweepTable {
    let solvers: Vec<Result<CompleteSolver, SolverError>> = anticipations
        .iter()
        .map(|a| CompleteSolver::new(market.clone(), utility, a.anticipation.clone()).map(|s| s.with_exec(Exec::Sequential)))
        .collect();
    let cells = anticipations.len() * grid.len();
    let results = exec.map_range(cells, |cell| {
        let (a, g) = (cell / grid.len(), cell % grid.len());
        let solver = solvers[a].as_ref().map_err(Clone::clone)?;
        solver.value_of_information(grid[g], method)
    });
    let mut table = SweepTable::default();
    for (cell, result) in results.into_iter().enumerate() {
        let (a, g) = (cell / grid.len(), cell % grid.len());
        let name = anticipations[a].name.clone();
        match result {
            Ok(report) => table.rows.push(SweepRow {
                anticipation: name,
                wealth: grid[g],
                lambda: report.lambda,
                value: report.value,
                additional: report.additional,
                proportion: report.proportion,
            }),
            Err(e) => table.failures.push(SweepFailure { anticipation: name, wealth: grid[g], error: e.to_string() }),
        }
    }
    table
}
