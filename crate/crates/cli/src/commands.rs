//! The four subcommands. Each returns a JSON summary and a bundle of
//! table files; nothing here touches the filesystem.

use num::BigRational;
use serde_json::{json, Value};
use weakinfo::complete::{CompleteMarket, CompleteSolver};
use weakinfo::market::{BinomialParams, CompleteMarketSpec, PathSpace, TrinomialParams};
use weakinfo::measures::{martingale_defect, minimal_measure, risk_neutral_binomial, risk_neutral_probability};
use weakinfo::scalar::{format_rational, Scalar};
use weakinfo::sweep::{sweep, NamedAnticipation};
use weakinfo::trinomial::{
    default_mixing, extremal_measures, solve_trinomial, ProductMeasureSet, TrinomialAnticipation,
};
use weakinfo::{Anticipation, BinomialMeasure, Exec, Preset, Proportion, SolverOptions, TrinomialProblem};

use crate::config::{
    AnticipationConfig, AnticipationSource, BinomialConfig, CommandName, CompleteConfig, Config, Granularity, ModelConfig,
    Num, PresetName, TrinomialConfig,
};
use crate::error::CliError;
use crate::output::{Bundle, Precision, Table};

const DEFAULT_REPLICATION_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub precision: Precision,
    /// Overrides `run.tolerance`.
    pub tolerance: Option<f64>,
    pub exec: Exec,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub results: Value,
    pub bundle: Bundle,
}

/// Runs `command`; `source` names the config file in error messages.
pub fn execute(command: CommandName, config: &Config, source: &str, settings: &Settings) -> Result<Outcome, CliError> {
    let ctx = Context { config, source, settings };
    match command {
        CommandName::Measure => ctx.measure(),
        CommandName::Value => ctx.value(),
        CommandName::Sweep => ctx.sweep(),
        CommandName::Trinomial => ctx.trinomial(),
    }
}

struct Context<'a> {
    config: &'a Config,
    source: &'a str,
    settings: &'a Settings,
}

fn binomial_params(m: &BinomialConfig) -> Result<BinomialParams, CliError> {
    Ok(BinomialParams::new(m.s.value(), m.h.value(), m.k.value(), m.r.value(), m.periods, m.wealth.value())?)
}

fn trinomial_params(m: &TrinomialConfig) -> Result<TrinomialParams, CliError> {
    Ok(TrinomialParams::new(m.s.value(), m.a.value(), m.b.value(), m.c.value(), m.r.value(), m.periods, m.wealth.value())?)
}

fn complete_spec(m: &CompleteConfig) -> Result<CompleteMarketSpec, CliError> {
    let returns = m.returns.iter().map(|row| row.iter().map(Num::value).collect()).collect();
    let prices = m.prices.iter().map(Num::value).collect();
    Ok(CompleteMarketSpec::new(prices, returns, m.r.value(), m.periods, m.wealth.value())?)
}

impl Context<'_> {
    fn error(&self, message: impl Into<String>) -> CliError {
        CliError::config(self.source, message)
    }

    fn round(&self, value: Value) -> Value {
        self.settings.precision.apply(value)
    }

    fn utility(&self) -> weakinfo::Utility {
        self.config.utility.0
    }

    fn required_anticipation(&self, command: &str) -> Result<&AnticipationConfig, CliError> {
        self.config.anticipation.as_ref().ok_or_else(|| self.error(format!("`{command}` needs an `anticipation` section")))
    }

    fn complete_market(&self, command: &str) -> Result<CompleteMarket, CliError> {
        match &self.config.model {
            ModelConfig::Binomial(m) => Ok(CompleteMarket::binomial(&binomial_params(m)?)?),
            ModelConfig::Complete(m) => Ok(CompleteMarket::general(&complete_spec(m)?)?),
            ModelConfig::Trinomial(_) => {
                Err(self.error(format!("`{command}` needs a binomial or complete model; use `trinomial` for this model")))
            }
        }
    }

    /// Terminal weights on a complete market.
    fn anticipation(&self, spec: &AnticipationConfig, market: &CompleteMarket, field: &str) -> Result<Anticipation<f64>, CliError> {
        if spec.over == Some(Granularity::Paths) {
            return Err(self.error(format!("{field}.over: complete markets take terminal weights only")));
        }
        match &spec.source {
            AnticipationSource::Weights(weights) => {
                let expected = market.terminal_count();
                if weights.len() != expected {
                    return Err(self.error(format!(
                        "{field}.weights: the model has {expected} terminal nodes but {} weights were given",
                        weights.len()
                    )));
                }
                let values = weights.iter().map(Num::value).collect();
                let built = if spec.pruning { Anticipation::with_pruning(values) } else { Anticipation::new(values) };
                built.map_err(|e| self.error(format!("{field}.weights: {e}")))
            }
            AnticipationSource::Preset(preset) => {
                let core = match preset {
                    PresetName::Precise => Preset::Precise,
                    PresetName::Uniform => Preset::Uniform,
                    PresetName::Conservative => Preset::Conservative,
                    PresetName::RiskNeutral => Preset::RiskNeutral,
                    PresetName::Reference => {
                        return Err(self.error(format!("{field}.preset: `reference` only applies to trinomial models")))
                    }
                };
                core.anticipation(market).map_err(|e| self.error(format!("{field}.preset: {e}")))
            }
        }
    }

    fn measure(&self) -> Result<Outcome, CliError> {
        let ModelConfig::Binomial(m) = &self.config.model else {
            return Err(self.error(format!("`measure` needs a binomial model, got {}", self.config.model.kind())));
        };
        let params = binomial_params(m)?;
        let spec = self.required_anticipation("measure")?;
        let exact_weights = match &spec.source {
            AnticipationSource::Weights(w) => w.iter().map(Num::exact).collect::<Option<Vec<_>>>(),
            AnticipationSource::Preset(_) => None,
        };
        let exact_market = [&m.h, &m.k, &m.r].iter().all(|x| x.exact().is_some());
        let (table, mut results) = match exact_weights.filter(|_| exact_market) {
            Some(weights) => {
                if weights.len() != params.periods + 1 {
                    return Err(self.error(format!(
                        "anticipation.weights: the model has {} terminal nodes but {} weights were given",
                        params.periods + 1,
                        weights.len()
                    )));
                }
                let weights: Vec<BigRational> = weights.into_iter().cloned().collect();
                let nu = if spec.pruning { Anticipation::with_pruning(weights) } else { Anticipation::new(weights) }
                    .map_err(|e| self.error(format!("anticipation.weights: {e}")))?;
                let exact = |x: &Num| x.exact().expect("checked exact").clone();
                let up = risk_neutral_probability(exact(&m.h), exact(&m.k), exact(&m.r));
                let tilde = BinomialMeasure::constant(params.periods, up)?;
                let mut out = measure_table(&params, &tilde, &nu, &|x: &BigRational| json!(format_rational(x)))?;
                out.1["arithmetic"] = json!("exact");
                out
            }
            None => {
                let market = CompleteMarket::binomial(&params)?;
                let nu = self.anticipation(spec, &market, "anticipation")?;
                let tilde = risk_neutral_binomial(&params)?;
                let precision = self.settings.precision;
                let mut out = measure_table(&params, &tilde, &nu, &|x: &f64| precision.number(*x))?;
                out.1["arithmetic"] = json!("float");
                out
            }
        };
        results["periods"] = json!(params.periods);
        let mut bundle = Bundle::default();
        bundle.table("measure_tree", &self.round_table(table));
        Ok(Outcome { results: self.round(results), bundle })
    }

    fn round_table(&self, mut table: Table) -> Table {
        for row in table.rows.iter_mut() {
            for cell in row.iter_mut() {
                *cell = self.round(cell.take());
            }
        }
        table
    }

    fn value(&self) -> Result<Outcome, CliError> {
        let market = self.complete_market("value")?;
        let nu = self.anticipation(self.required_anticipation("value")?, &market, "anticipation")?;
        let solver = CompleteSolver::new(market.clone(), self.utility(), nu)?.with_exec(self.settings.exec);
        let method = self.config.run.method.unwrap_or_default();
        let solution = solver.solve(market.wealth(), method)?;
        let assets = market.assets();
        let suffixed = |stem: &str| -> Vec<String> {
            if assets == 1 {
                vec![stem.to_string()]
            } else {
                (1..=assets).map(|j| format!("{stem}_{j}")).collect()
            }
        };
        let mut columns = vec!["time".to_string(), "state".to_string(), "label".to_string()];
        columns.extend(suffixed("price"));
        columns.push("wealth".into());
        columns.extend(suffixed("delta"));
        columns.push("bond".into());
        let mut table = Table::with_columns(columns);
        let periods = market.periods();
        for n in 0..=periods {
            for node in 0..market.node_count(n) {
                let mut row = vec![json!(n), json!(node), json!(market.node_label(n, node))];
                row.extend(market.risky_prices(n, node).into_iter().map(|p| json!(p)));
                row.push(json!(solution.wealth.levels[n][node]));
                if n < periods {
                    row.extend(solution.portfolio.risky[n][node].iter().map(|d| json!(d)));
                    row.push(json!(solution.portfolio.bond[n][node]));
                } else {
                    row.extend(std::iter::repeat_n(Value::Null, assets + 1));
                }
                table.push(row);
            }
        }
        let report = solution.report;
        let results = json!({
            "method": method,
            "wealth": market.wealth(),
            "lambda": report.lambda,
            "u": report.value,
            "riskless_utility": report.riskless_utility,
            "F": report.additional,
            "pi": proportion(report.proportion),
            "delta0": solution.portfolio.risky[0][0],
            "bond0": solution.portfolio.bond[0][0],
        });
        let mut bundle = Bundle::default();
        bundle.table("value_tree", &self.round_table(table));
        Ok(Outcome { results: self.round(results), bundle })
    }

    fn sweep(&self) -> Result<Outcome, CliError> {
        let market = self.complete_market("sweep")?;
        let grid = self.config.run.grid.as_ref().ok_or_else(|| self.error("`sweep` needs `run.grid`"))?.points();
        let specs: Vec<AnticipationConfig> = match &self.config.run.anticipations {
            Some(list) if list.is_empty() => return Err(self.error("run.anticipations must not be empty")),
            Some(list) => list.clone(),
            None => [PresetName::Precise, PresetName::Uniform, PresetName::Conservative, PresetName::RiskNeutral]
                .into_iter()
                .map(AnticipationConfig::preset)
                .collect(),
        };
        let mut named = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let anticipation = self.anticipation(spec, &market, &format!("run.anticipations[{i}]"))?;
            named.push(NamedAnticipation { name: spec.label(i), anticipation });
        }
        let method = self.config.run.method.unwrap_or_default();
        let table = sweep(&market, self.utility(), &named, &grid, method, self.settings.exec);
        let mut curve = Table::new(&["anticipation", "v", "lambda", "u", "F", "pi"]);
        for row in &table.rows {
            curve.push(vec![
                json!(row.anticipation),
                json!(row.wealth),
                json!(row.lambda),
                json!(row.value),
                json!(row.additional),
                proportion(row.proportion),
            ]);
        }
        let results = json!({
            "method": method,
            "anticipations": named.iter().map(|a| a.name.clone()).collect::<Vec<_>>(),
            "grid_points": grid.len(),
            "rows": table.rows.len(),
            "failures": table.failures,
        });
        let mut bundle = Bundle::default();
        bundle.table("curve", &self.round_table(curve));
        Ok(Outcome { results: self.round(results), bundle })
    }

    fn trinomial_anticipation(&self, params: &TrinomialParams) -> Result<TrinomialAnticipation, CliError> {
        let Some(spec) = &self.config.anticipation else {
            return Ok(TrinomialAnticipation::Terminals(Anticipation::uniform((params.periods + 1) * (params.periods + 2) / 2)));
        };
        if spec.pruning {
            return Err(self.error("anticipation.pruning: the trinomial solver needs strictly positive weights"));
        }
        let over = spec.over.unwrap_or_default();
        let count = match over {
            Granularity::Terminals => (params.periods + 1) * (params.periods + 2) / 2,
            Granularity::Paths => 3usize.pow(params.periods as u32),
        };
        let wrap = |a: Anticipation<f64>| match over {
            Granularity::Terminals => TrinomialAnticipation::Terminals(a),
            Granularity::Paths => TrinomialAnticipation::Paths(a),
        };
        match &spec.source {
            AnticipationSource::Weights(weights) => {
                if weights.len() != count {
                    return Err(self.error(format!(
                        "anticipation.weights: expected {count} weights over {}, got {}",
                        if over == Granularity::Paths { "paths" } else { "terminal nodes" },
                        weights.len()
                    )));
                }
                let nu = Anticipation::new(weights.iter().map(Num::value).collect())
                    .map_err(|e| self.error(format!("anticipation.weights: {e}")))?;
                Ok(wrap(nu))
            }
            AnticipationSource::Preset(PresetName::Uniform) => Ok(wrap(Anticipation::uniform(count))),
            AnticipationSource::Preset(PresetName::Reference) => {
                let products = ProductMeasureSet::new(extremal_measures(params)?, params.periods)?;
                let reference = products.mixture(&default_mixing(params.periods))?;
                Ok(TrinomialAnticipation::Paths(Anticipation::new(reference.probabilities().to_vec())?))
            }
            AnticipationSource::Preset(other) => Err(self.error(format!(
                "anticipation.preset: `{}` is not available for trinomial models (use `uniform` or `reference`)",
                other.name()
            ))),
        }
    }

    fn trinomial(&self) -> Result<Outcome, CliError> {
        let ModelConfig::Trinomial(m) = &self.config.model else {
            return Err(self.error(format!("`trinomial` needs a trinomial model, got {}", self.config.model.kind())));
        };
        let params = trinomial_params(m)?;
        let anticipation = self.trinomial_anticipation(&params)?;
        let run = &self.config.run;
        let t = run.t.clone().unwrap_or_else(|| default_mixing(params.periods));
        if t.len() != params.periods {
            return Err(self.error(format!("run.t: expected {} mixing weights, got {}", params.periods, t.len())));
        }
        let defaults = SolverOptions::default();
        let options = SolverOptions {
            tolerance: self.settings.tolerance.or(run.tolerance).unwrap_or(defaults.tolerance),
            jacobian: run.jacobian.unwrap_or_default(),
            exec: self.settings.exec,
            ..defaults
        };
        let problem = TrinomialProblem::new(&params, self.utility(), &anticipation)?;
        let solution = solve_trinomial(&problem, params.wealth, &t, &options)?;
        let lattice = problem.lattice();
        let hedge = &solution.hedge;

        let mut tree = Table::new(&["time", "node", "label", "price", "wealth", "delta", "bond", "mismatch"]);
        for n in 0..=params.periods {
            for node in 0..3usize.pow(n as u32) {
                let mut row = vec![json!(n), json!(node), json!(trinomial_label(n, node)), json!(lattice.price_at(node, n))];
                row.push(json!(hedge.wealth[n][node]));
                if n < params.periods {
                    row.extend([json!(hedge.delta[n][node]), json!(hedge.bond[n][node]), json!(hedge.mismatch[n][node])]);
                } else {
                    row.extend([Value::Null, Value::Null, Value::Null]);
                }
                tree.push(row);
            }
        }
        let mut terminal = Table::new(&["path", "label", "price", "nu", "wealth"]);
        for (path, wealth) in solution.terminal_wealth.iter().enumerate() {
            terminal.push(vec![
                json!(path),
                json!(lattice.path_label(path)),
                json!(lattice.price_at(path, params.periods)),
                json!(problem.path_anticipation()[path]),
                json!(wealth),
            ]);
        }
        let replication_tolerance = run.replication_tolerance.unwrap_or(DEFAULT_REPLICATION_TOLERANCE);
        let max_budget = solution.budget_residuals.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
        let results = json!({
            "lambda": solution.lambda.lambda,
            "method": solution.lambda.method,
            "iterations": solution.lambda.iterations,
            "residual": solution.lambda.residual,
            "residual_history": solution.lambda.residual_history,
            "tolerance": options.tolerance,
            "u": solution.value,
            "riskless_utility": solution.riskless_utility,
            "F": solution.value - solution.riskless_utility,
            "max_budget_residual": max_budget,
            "t": t,
            "replicable": hedge.is_replicable(replication_tolerance),
            "replication_tolerance": replication_tolerance,
            "worst_mismatch": hedge.worst_mismatch,
            "worst_node": hedge.worst_node,
            "delta0": hedge.delta[0][0],
        });
        let mut bundle = Bundle::default();
        bundle.table("trinomial_tree", &self.round_table(tree));
        bundle.table("terminal_wealth", &self.round_table(terminal));
        Ok(Outcome { results: self.round(results), bundle })
    }
}

fn proportion(p: Proportion) -> Value {
    match p {
        Proportion::Defined(x) => json!(x),
        Proportion::Undefined => Value::Null,
    }
}

fn trinomial_label(n: usize, prefix: usize) -> String {
    let letters: String =
        (0..n).map(|step| ['U', 'M', 'D'][weakinfo::market::TrinomialLattice::outcome(prefix, step)]).collect();
    if letters.is_empty() {
        "root".into()
    } else {
        letters
    }
}

/// One record per node: price, `P̃` and `P^ν` transitions, and the node's
/// probability under `P^ν`.
fn measure_table<T: Scalar>(
    params: &BinomialParams,
    tilde: &BinomialMeasure<T>,
    nu: &Anticipation<T>,
    render: &dyn Fn(&T) -> Value,
) -> Result<(Table, Value), CliError> {
    let minimal = minimal_measure(tilde, nu)?;
    let node_probabilities = minimal.node_probabilities();
    let mut table = Table::new(&[
        "time",
        "state",
        "price",
        "risk_neutral_up",
        "risk_neutral_down",
        "minimal_up",
        "minimal_down",
        "probability",
    ]);
    for n in 0..=params.periods {
        for i in 0..=n {
            let mut row = vec![json!(n), json!(i), json!(params.price(n, i))];
            if n < params.periods {
                row.push(render(tilde.up_probability(n, i)));
                row.push(render(&tilde.down_probability(n, i)));
                row.push(render(minimal.up_probability(n, i)));
                row.push(render(&minimal.down_probability(n, i)));
            } else {
                row.extend([Value::Null, Value::Null, Value::Null, Value::Null]);
            }
            row.push(render(&node_probabilities[n][i]));
            table.push(row);
        }
    }
    let results = json!({
        "risk_neutral_up": render(tilde.up_probability(0, 0)),
        "minimal_terminal": minimal.terminal_distribution().iter().map(render).collect::<Vec<_>>(),
        "risk_neutral_defect": martingale_defect(tilde, params),
    });
    Ok((table, results))
}
