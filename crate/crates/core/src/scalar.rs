//! Numeric field abstraction so the measure constructions run both in `f64`
//! and in exact rational arithmetic.

use std::fmt::Debug;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Num, Signed, ToPrimitive, Zero};

/// A field we can build probability trees over.
pub trait Scalar: Clone + Debug + PartialOrd + Num + Send + Sync {
    fn from_u64(n: u64) -> Self;

    fn to_f64(&self) -> f64;

    /// Equality used for measurability and normalisation checks: exact for
    /// rationals, relative `1e-12` for floats.
    fn approx_eq(&self, other: &Self) -> bool;

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }
}

impl Scalar for f64 {
    fn from_u64(n: u64) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn approx_eq(&self, other: &Self) -> bool {
        let scale = 1.0_f64.max(self.abs()).max(other.abs());
        (self - other).abs() <= 1e-12 * scale
    }
}

impl Scalar for BigRational {
    fn from_u64(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn approx_eq(&self, other: &Self) -> bool {
        self == other
    }

    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
}

/// `n choose k` as an exact integer in the target field.
pub fn binomial_coefficient<T: Scalar>(n: u64, k: u64) -> T {
    if k > n {
        return T::zero();
    }
    let k = k.min(n - k);
    // multiplicative form stays integral at every step
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    T::from_u64(acc as u64)
}

/// Parse `"3/8"`, `"0.125"`, `"-1.5e-3"` or `"7"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let n = parse_rational(num)?;
        let d = parse_rational(den)?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut value = BigInt::parse_bytes(all_digits.as_bytes(), 10)?;
    if negative {
        value = -value;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let ratio = if scale >= 0 {
        BigRational::from_integer(value * num::pow(ten, scale as usize))
    } else {
        BigRational::new(value, num::pow(ten, (-scale) as usize))
    };
    Some(ratio)
}

/// Render a rational as `p/q`, or `p` for integers.
pub fn format_rational(value: &BigRational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("1/4"), Some(q(1, 4)));
        assert_eq!(parse_rational("0.09"), Some(q(9, 100)));
        assert_eq!(parse_rational("-0.019"), Some(q(-19, 1000)));
        assert_eq!(parse_rational("2.5e-1"), Some(q(1, 4)));
        assert_eq!(parse_rational("20"), Some(q(20, 1)));
        assert_eq!(parse_rational(".5"), Some(q(1, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(parse_rational(""), None);
    }

    #[test]
    fn binomial_coefficients() {
        assert_eq!(binomial_coefficient::<f64>(5, 2), 10.0);
        assert_eq!(binomial_coefficient::<f64>(20, 10), 184756.0);
        assert_eq!(binomial_coefficient::<f64>(3, 4), 0.0);
        assert_eq!(binomial_coefficient::<BigRational>(6, 3), q(20, 1));
    }

    #[test]
    fn formats_rationals() {
        assert_eq!(format_rational(&q(30, 48)), "5/8");
        assert_eq!(format_rational(&q(4, 2)), "2");
    }
}
