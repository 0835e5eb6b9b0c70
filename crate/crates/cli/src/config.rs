//! The JSON run configuration.
//!
//! Field-level checks run while deserializing, so serde_json attaches the
//! line and column of the offending value to every message.

use std::fmt;
use std::path::PathBuf;

use num::BigRational;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use weakinfo::complete::LambdaMethod;
use weakinfo::scalar::parse_rational;
use weakinfo::trinomial::JacobianMode;

pub const SCHEMA_VERSION: u32 = 1;

/// A number written as a JSON number, or as a string holding an exact
/// decimal or fraction such as `"0.09"` or `"1/4"`.
#[derive(Debug, Clone, PartialEq)]
pub enum Num {
    Float(f64),
    Exact { text: String, value: BigRational },
}

impl Num {
    pub fn value(&self) -> f64 {
        match self {
            Num::Float(x) => *x,
            Num::Exact { value, .. } => weakinfo::scalar::Scalar::to_f64(value),
        }
    }

    pub fn exact(&self) -> Option<&BigRational> {
        match self {
            Num::Float(_) => None,
            Num::Exact { value, .. } => Some(value),
        }
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Num::Float(x) => serializer.serialize_f64(*x),
            Num::Exact { text, .. } => serializer.serialize_str(text),
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct NumVisitor;

        impl Visitor<'_> for NumVisitor {
            type Value = Num;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string such as \"1/4\" or \"0.09\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Ok(Num::Float(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num::Float(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num::Float(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
                match parse_rational(v) {
                    Some(value) => Ok(Num::Exact { text: v.to_string(), value }),
                    None => Err(E::custom(format!("`{v}` is not a decimal or fraction"))),
                }
            }
        }

        deserializer.deserialize_any(NumVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(deserialize_with = "schema_version")]
    pub schema: u32,
    pub model: ModelConfig,
    pub utility: UtilityConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anticipation: Option<AnticipationConfig>,
    #[serde(default, skip_serializing_if = "RunConfig::is_empty")]
    pub run: RunConfig,
}

fn schema_version<'de, D: Deserializer<'de>>(deserializer: D) -> Result<u32, D::Error> {
    let version = u32::deserialize(deserializer)?;
    if version != SCHEMA_VERSION {
        return Err(de::Error::custom(format!("unsupported schema version {version}, expected {SCHEMA_VERSION}")));
    }
    Ok(version)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelConfig {
    Binomial(BinomialConfig),
    Trinomial(TrinomialConfig),
    Complete(CompleteConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::Binomial(_) => "binomial",
            ModelConfig::Trinomial(_) => "trinomial",
            ModelConfig::Complete(_) => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinomialConfig {
    pub s: Num,
    pub h: Num,
    pub k: Num,
    pub r: Num,
    pub periods: usize,
    pub wealth: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrinomialConfig {
    pub s: Num,
    pub a: Num,
    pub b: Num,
    pub c: Num,
    pub r: Num,
    pub periods: usize,
    pub wealth: Num,
}

/// `returns[ω][j]` is the gross one-period return of asset `j` in state `ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteConfig {
    pub prices: Vec<Num>,
    pub returns: Vec<Vec<Num>>,
    pub r: Num,
    pub periods: usize,
    pub wealth: Num,
}

/// `"log"`, `{"power": {"gamma": 0.5}}` or `{"exponential": {"alpha": 0.01}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UtilityRepr", into = "UtilityRepr")]
pub struct UtilityConfig(pub weakinfo::Utility);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
enum UtilityRepr {
    Log,
    Power { gamma: f64 },
    Exponential { alpha: f64 },
}

impl TryFrom<UtilityRepr> for UtilityConfig {
    type Error = String;

    fn try_from(repr: UtilityRepr) -> Result<Self, String> {
        let utility = match repr {
            UtilityRepr::Log => weakinfo::Utility::Log,
            UtilityRepr::Power { gamma } => weakinfo::Utility::Power { gamma },
            UtilityRepr::Exponential { alpha } => weakinfo::Utility::Exponential { alpha },
        };
        utility.validate().map_err(|e| e.to_string())?;
        Ok(UtilityConfig(utility))
    }
}

impl From<UtilityConfig> for UtilityRepr {
    fn from(config: UtilityConfig) -> Self {
        match config.0 {
            weakinfo::Utility::Log => UtilityRepr::Log,
            weakinfo::Utility::Power { gamma } => UtilityRepr::Power { gamma },
            weakinfo::Utility::Exponential { alpha } => UtilityRepr::Exponential { alpha },
        }
    }
}

/// Built-in anticipations. `reference` is the trinomial interior measure
/// with mixing weight 1/2 in every period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    Precise,
    Uniform,
    Conservative,
    RiskNeutral,
    Reference,
}

impl PresetName {
    pub fn name(self) -> &'static str {
        match self {
            PresetName::Precise => "precise",
            PresetName::Uniform => "uniform",
            PresetName::Conservative => "conservative",
            PresetName::RiskNeutral => "risk-neutral",
            PresetName::Reference => "reference",
        }
    }
}

/// Whether trinomial weights are given per terminal node or per path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    Terminals,
    Paths,
}

/// Exactly one of `weights` or `preset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnticipationRepr", into = "AnticipationRepr")]
pub struct AnticipationConfig {
    pub name: Option<String>,
    pub source: AnticipationSource,
    pub over: Option<Granularity>,
    pub pruning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnticipationSource {
    Weights(Vec<Num>),
    Preset(PresetName),
}

impl AnticipationConfig {
    pub fn label(&self, index: usize) -> String {
        match (&self.name, &self.source) {
            (Some(name), _) => name.clone(),
            (None, AnticipationSource::Preset(p)) => p.name().to_string(),
            (None, AnticipationSource::Weights(_)) => format!("custom-{index}"),
        }
    }

    pub fn preset(preset: PresetName) -> Self {
        AnticipationConfig { name: None, source: AnticipationSource::Preset(preset), over: None, pruning: false }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnticipationRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "weights")]
    weights: Option<Vec<Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<PresetName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    over: Option<Granularity>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pruning: bool,
}

fn weights<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<Vec<Num>>, D::Error> {
    let weights = Vec::<Num>::deserialize(deserializer)?;
    if weights.is_empty() {
        return Err(de::Error::custom("weights must not be empty"));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.value() >= 0.0) || !w.value().is_finite()) {
        return Err(de::Error::custom(format!("weight {i} is {}, weights must be nonnegative", w.value())));
    }
    let exact: Option<Vec<&BigRational>> = weights.iter().map(Num::exact).collect();
    match exact {
        Some(values) => {
            let sum = values.into_iter().fold(BigRational::from_integer(0.into()), |acc, w| acc + w);
            if sum != BigRational::from_integer(1.into()) {
                return Err(de::Error::custom(format!(
                    "weights must sum to 1, got {}",
                    weakinfo::scalar::format_rational(&sum)
                )));
            }
        }
        None => {
            let sum: f64 = weights.iter().map(Num::value).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(de::Error::custom(format!("weights must sum to 1, got {sum}")));
            }
        }
    }
    Ok(Some(weights))
}

impl TryFrom<AnticipationRepr> for AnticipationConfig {
    type Error = String;

    fn try_from(repr: AnticipationRepr) -> Result<Self, String> {
        let source = match (repr.weights, repr.preset) {
            (Some(w), None) => AnticipationSource::Weights(w),
            (None, Some(p)) => AnticipationSource::Preset(p),
            (Some(_), Some(_)) => return Err("anticipation takes either `weights` or `preset`, not both".into()),
            (None, None) => return Err("anticipation needs `weights` or `preset`".into()),
        };
        Ok(AnticipationConfig { name: repr.name, source, over: repr.over, pruning: repr.pruning })
    }
}

impl From<AnticipationConfig> for AnticipationRepr {
    fn from(config: AnticipationConfig) -> Self {
        let (weights, preset) = match config.source {
            AnticipationSource::Weights(w) => (Some(w), None),
            AnticipationSource::Preset(p) => (None, Some(p)),
        };
        AnticipationRepr { name: config.name, weights, preset, over: config.over, pruning: config.pruning }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Measure,
    Value,
    Sweep,
    Trinomial,
}

impl CommandName {
    pub fn name(self) -> &'static str {
        match self {
            CommandName::Measure => "measure",
            CommandName::Value => "value",
            CommandName::Sweep => "sweep",
            CommandName::Trinomial => "trinomial",
        }
    }
}

/// `{"low": 50, "high": 1000, "count": 20}` or `{"values": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub enum GridConfig {
    Linear { low: f64, high: f64, count: usize },
    Values(Vec<f64>),
}

impl GridConfig {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridConfig::Linear { low, high, count } => weakinfo::sweep::linear_grid(*low, *high, *count),
            GridConfig::Values(v) => v.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

impl TryFrom<GridRepr> for GridConfig {
    type Error = String;

    fn try_from(repr: GridRepr) -> Result<Self, String> {
        match repr {
            GridRepr { low: Some(low), high: Some(high), count: Some(count), values: None } => {
                if count == 0 || !(low <= high) {
                    return Err(format!("grid needs low <= high and count >= 1, got [{low}, {high}] x {count}"));
                }
                Ok(GridConfig::Linear { low, high, count })
            }
            GridRepr { low: None, high: None, count: None, values: Some(values) } if !values.is_empty() => {
                Ok(GridConfig::Values(values))
            }
            _ => Err("grid takes `low`, `high` and `count`, or a nonempty `values` list".into()),
        }
    }
}

impl From<GridConfig> for GridRepr {
    fn from(grid: GridConfig) -> Self {
        match grid {
            GridConfig::Linear { low, high, count } => {
                GridRepr { low: Some(low), high: Some(high), count: Some(count), values: None }
            }
            GridConfig::Values(values) => GridRepr { low: None, high: None, count: None, values: Some(values) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Used when no subcommand is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    /// Sweep curves; defaults to the four built-in presets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anticipations: Option<Vec<AnticipationConfig>>,
    /// Trinomial mixing weights `t_n` for the wealth tree.
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "mixing")]
    pub t: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "positive")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "positive")]
    pub replication_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<LambdaMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian: Option<JacobianMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    fn is_empty(&self) -> bool {
        *self == RunConfig::default()
    }
}

fn mixing<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<Vec<f64>>, D::Error> {
    let t = Vec::<f64>::deserialize(deserializer)?;
    if let Some(x) = t.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(de::Error::custom(format!("mixing weights must lie in [0, 1], got {x}")));
    }
    Ok(Some(t))
}

fn positive<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<f64>, D::Error> {
    let x = f64::deserialize(deserializer)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(de::Error::custom(format!("tolerance must be positive, got {x}")));
    }
    Ok(Some(x))
}

pub fn parse(text: &str) -> Result<Config, serde_json::Error> {
    serde_json::from_str(text)
}
