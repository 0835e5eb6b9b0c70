//! Log, power and exponential utilities with marginal utility, its inverse
//! and the convex conjugate `Ũ(y) = sup_x [U(x) - x y]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UtilityError {
    #[error("{function} is undefined at {value} for {utility} utility")]
    Domain { function: &'static str, utility: &'static str, value: f64 },
    #[error("invalid utility parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Utility {
    /// `ln x`, `x > 0`.
    Log,
    /// `x^γ / γ` with `γ < 1, γ != 0`, `x > 0`.
    Power { gamma: f64 },
    /// `-exp(-α x)` with `α > 0`, any real `x`.
    Exponential { alpha: f64 },
}

impl Utility {
    pub fn power(gamma: f64) -> Result<Self, UtilityError> {
        let u = Utility::Power { gamma };
        u.validate()?;
        Ok(u)
    }

    pub fn exponential(alpha: f64) -> Result<Self, UtilityError> {
        let u = Utility::Exponential { alpha };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<(), UtilityError> {
        match *self {
            Utility::Log => Ok(()),
            Utility::Power { gamma } => {
                if gamma.is_finite() && gamma < 1.0 && gamma != 0.0 {
                    Ok(())
                } else {
                    Err(UtilityError::InvalidParameter(format!("power exponent must satisfy γ < 1, γ != 0; got {gamma}")))
                }
            }
            Utility::Exponential { alpha } => {
                if alpha.is_finite() && alpha > 0.0 {
                    Ok(())
                } else {
                    Err(UtilityError::InvalidParameter(format!("risk aversion must satisfy α > 0; got {alpha}")))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Utility::Log => "log",
            Utility::Power { .. } => "power",
            Utility::Exponential { .. } => "exponential",
        }
    }

    /// Whether `U'(0+) = ∞` and `U'(∞) = 0`; false for exponential utility.
    pub fn satisfies_inada(&self) -> bool {
        !matches!(self, Utility::Exponential { .. })
    }

    /// Whether terminal wealth must stay strictly positive.
    pub fn requires_positive_wealth(&self) -> bool {
        !matches!(self, Utility::Exponential { .. })
    }

    fn domain(&self, function: &'static str, value: f64) -> UtilityError {
        UtilityError::Domain { function, utility: self.name(), value }
    }

    fn check_wealth(&self, function: &'static str, x: f64) -> Result<(), UtilityError> {
        let ok = if self.requires_positive_wealth() { x > 0.0 } else { x.is_finite() };
        if ok && !x.is_nan() {
            Ok(())
        } else {
            Err(self.domain(function, x))
        }
    }

    fn check_marginal(&self, function: &'static str, y: f64) -> Result<(), UtilityError> {
        if y > 0.0 && y.is_finite() {
            Ok(())
        } else {
            Err(self.domain(function, y))
        }
    }

    /// `U(x)`.
    pub fn evaluate(&self, x: f64) -> Result<f64, UtilityError> {
        self.check_wealth("U", x)?;
        Ok(match *self {
            Utility::Log => x.ln(),
            Utility::Power { gamma } => x.powf(gamma) / gamma,
            Utility::Exponential { alpha } => -(-alpha * x).exp(),
        })
    }

    /// `U'(x)`.
    pub fn marginal(&self, x: f64) -> Result<f64, UtilityError> {
        self.check_wealth("U'", x)?;
        Ok(match *self {
            Utility::Log => 1.0 / x,
            Utility::Power { gamma } => x.powf(gamma - 1.0),
            Utility::Exponential { alpha } => alpha * (-alpha * x).exp(),
        })
    }

    /// `I(y) = (U')^{-1}(y)` for `y > 0`.
    pub fn inverse_marginal(&self, y: f64) -> Result<f64, UtilityError> {
        self.check_marginal("I", y)?;
        Ok(match *self {
            Utility::Log => 1.0 / y,
            Utility::Power { gamma } => y.powf(1.0 / (gamma - 1.0)),
            Utility::Exponential { alpha } => -(y / alpha).ln() / alpha,
        })
    }

    /// `I'(y)`, strictly negative.
    pub fn inverse_marginal_derivative(&self, y: f64) -> Result<f64, UtilityError> {
        self.check_marginal("I'", y)?;
        Ok(match *self {
            Utility::Log => -1.0 / (y * y),
            Utility::Power { gamma } => {
                let e = 1.0 / (gamma - 1.0);
                e * y.powf(e - 1.0)
            }
            Utility::Exponential { alpha } => -1.0 / (alpha * y),
        })
    }

    /// `Ũ(y) = U(I(y)) - y I(y)`.
    pub fn conjugate(&self, y: f64) -> Result<f64, UtilityError> {
        self.check_marginal("Ũ", y)?;
        Ok(match *self {
            Utility::Log => -y.ln() - 1.0,
            Utility::Power { gamma } => (1.0 / gamma - 1.0) * y.powf(gamma / (gamma - 1.0)),
            Utility::Exponential { alpha } => {
                let z = y / alpha;
                -z + z * z.ln()
            }
        })
    }
}
