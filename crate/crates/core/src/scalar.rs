//! Arithmetic modes shared by every computation in the crate.
//!
//! All solvers are generic over [`Scalar`], which is implemented for `f64`
//! (floating-point mode) and [`Rational`] (exact mode). The two modes differ
//! only in how ties are decided: exact mode compares exactly, floating-point
//! mode treats values within [`FLOAT_TIE_TOLERANCE`] as equal.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Arbitrary-precision rational in reduced form with a positive denominator.
pub type Rational = BigRational;

/// Absolute tolerance used for equality tests in floating-point mode.
pub const FLOAT_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArithmeticMode {
    ExactRational,
    FloatingPoint,
}

impl Display for ArithmeticMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArithmeticMode::ExactRational => f.write_str("exact"),
            ArithmeticMode::FloatingPoint => f.write_str("float"),
        }
    }
}

/// Number type a problem is evaluated in.
pub trait Scalar:
    Clone
    + PartialOrd
    + Debug
    + Display
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Send
    + Sync
    + 'static
{
    const MODE: ArithmeticMode;

    /// `num / den`; `den` must be non-zero.
    fn from_ratio(num: u64, den: u64) -> Self;

    fn to_f64(&self) -> f64;

    /// Equality under the mode's tie policy.
    fn tie_eq(&self, other: &Self) -> bool;

    /// JSON representation: a number in float mode, a `"num/den"` string in exact mode.
    fn to_json(&self) -> serde_json::Value;

    /// Parses a probability literal (`"0.25"`, `"1/4"`, `"2.5e-1"`).
    fn parse_literal(text: &str) -> Option<Self>;

    /// `self <= other` under the mode's tie policy.
    fn tie_le(&self, other: &Self) -> bool {
        self <= other || self.tie_eq(other)
    }

    /// Whether `0 <= self <= 1` (NaN is rejected).
    fn is_probability(&self) -> bool {
        *self >= Self::zero() && *self <= Self::one()
    }
}

impl Scalar for f64 {
    const MODE: ArithmeticMode = ArithmeticMode::FloatingPoint;

    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn tie_eq(&self, other: &Self) -> bool {
        (self - other).abs() <= FLOAT_TIE_TOLERANCE
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Number::from_f64(*self)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null)
    }

    fn parse_literal(text: &str) -> Option<Self> {
        parse_float(text)
    }
}

impl Scalar for Rational {
    const MODE: ArithmeticMode = ArithmeticMode::ExactRational;

    fn from_ratio(num: u64, den: u64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // Very large numerators/denominators: scale down both sides.
            let shift = self.denom().bits().max(self.numer().bits()).saturating_sub(1000);
            let n = (self.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (self.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        })
    }

    fn tie_eq(&self, other: &Self) -> bool {
        self == other
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(format_rational(self))
    }

    fn parse_literal(text: &str) -> Option<Self> {
        parse_rational(text)
    }
}

/// `serialize_with` adapter writing a scalar in its JSON representation.
pub fn ser_scalar<T: Scalar, S: serde::Serializer>(value: &T, serializer: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&value.to_json(), serializer)
}

/// `num/den`, or just `num` for integers.
pub fn format_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Parses `"a/b"`, a decimal such as `"0.251"`, or scientific notation
/// (`"2.5e-3"`) into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(Rational::new(num, den));
    }
    parse_decimal(text)
}

fn parse_decimal(text: &str) -> Option<Rational> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}0").parse().ok()?;
    let digits = digits / BigInt::from(10);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(digits * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(digits, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Some(value)
}

/// Parses a probability literal in floating-point mode.
pub fn parse_float(text: &str) -> Option<f64> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: f64 = num.trim().parse().ok()?;
        let den: f64 = den.trim().parse().ok()?;
        return Some(num / den);
    }
    text.parse().ok()
}

/// Converts a rational to the closest `f64` (used when sampling exact problems).
pub fn rational_to_f64(value: &Rational) -> f64 {
    Scalar::to_f64(value)
}

/// Absolute value helper for either mode.
pub fn abs_diff<T: Scalar>(a: &T, b: &T) -> T {
    if a >= b {
        a.clone() - b.clone()
    } else {
        b.clone() - a.clone()
    }
}
