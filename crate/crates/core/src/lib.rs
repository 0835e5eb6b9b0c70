//! Value of weak information about the terminal stock price in
//! discrete-time markets.
//!
//! An investor who only knows the law `ν` of `S_N` (not the path) maximizes
//! expected utility under the minimal measure `P^ν`. This crate builds those
//! measures, solves the optimal investment problem in complete binomial and
//! multi-state markets, and handles the incomplete trinomial case through the
//! family of product extremal martingale measures.

pub mod complete;
pub mod market;
pub mod measures;
pub mod par;
pub mod scalar;
pub mod sweep;
pub mod trinomial;
pub mod utility;

pub use complete::{CompleteMarket, CompleteSolution, CompleteSolver, LambdaMethod, Proportion, SolverError, ValueReport};
pub use market::{BinomialParams, CompleteMarketSpec, MarketError, PathSpace, TrinomialParams};
pub use measures::{Anticipation, BinomialMeasure, MeasureError, PathMeasure};
pub use par::Exec;
pub use sweep::{NamedAnticipation, Preset, SweepTable};
pub use trinomial::{SolverOptions, TrinomialAnticipation, TrinomialProblem, TrinomialSolution};
pub use utility::{Utility, UtilityError};
