//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Two instantiations are provided: `f64` for everyday work and
//! [`Rational`] (arbitrary precision fractions) for exact oracles.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Exact rational number used by the rational instantiation.
pub type Rational = BigRational;

/// Textual form of a scalar inside a population file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Literal {
    /// Emitted as a bare JSON number.
    Number(String),
    /// Emitted as a JSON string, e.g. `"3/40"`.
    Fraction(String),
}

pub trait Scalar:
    Clone
    + Debug
    + Display
    + PartialOrd
    + Num
    + Signed
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
    + 'static
{
    /// `num / den`; `den` must be nonzero.
    fn from_ratio(num: i64, den: i64) -> Self;

    /// Parses a decimal literal (`0.25`, `1e-3`) or a fraction (`3/40`).
    fn parse_literal(text: &str) -> Result<Self, String>;

    fn to_literal(&self) -> Literal;

    /// Slack used by pivoting and feasibility tests. Zero for exact types.
    fn tolerance() -> Self;

    fn is_exact() -> bool;

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite value")
    }

    /// `|self - other| <= tol`, with the difference formed in `Self`.
    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.clone() - other.clone()).abs().to_f64_lossy() <= tol
    }

    fn clamp_unit(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else if self > Self::one() {
            Self::one()
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn parse_literal(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let value = match text.split_once('/') {
            Some((num, den)) => {
                let num: f64 = num.trim().parse().map_err(|_| format!("bad numerator in {text:?}"))?;
                let den: f64 = den.trim().parse().map_err(|_| format!("bad denominator in {text:?}"))?;
                if den == 0.0 {
                    return Err(format!("zero denominator in {text:?}"));
                }
                num / den
            }
            None => text.parse().map_err(|_| format!("not a number: {text:?}"))?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(format!("non-finite value {text:?}"))
        }
    }

    fn to_literal(&self) -> Literal {
        Literal::Number(format_sig17(*self))
    }

    fn tolerance() -> Self {
        1e-11
    }

    fn is_exact() -> bool {
        false
    }
}

impl Scalar for Rational {
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn parse_literal(text: &str) -> Result<Self, String> {
        let text = text.trim();
        match text.split_once('/') {
            Some((num, den)) => {
                let num = parse_decimal(num.trim())?;
                let den = parse_decimal(den.trim())?;
                if den.is_zero() {
                    return Err(format!("zero denominator in {text:?}"));
                }
                Ok(num / den)
            }
            None => parse_decimal(text),
        }
    }

    fn to_literal(&self) -> Literal {
        if self.is_integer() {
            Literal::Number(self.numer().to_string())
        } else {
            Literal::Fraction(format!("{}/{}", self.numer(), self.denom()))
        }
    }

    fn tolerance() -> Self {
        Self::zero()
    }

    fn is_exact() -> bool {
        true
    }

    fn from_f64_lossy(value: f64) -> Self {
        // Go through the shortest decimal so 0.1 becomes 1/10 rather than
        // the exact binary expansion.
        parse_decimal(&format!("{value}")).expect("finite value")
    }
}

/// Exact value of a decimal literal such as `-12.5e-3`.
fn parse_decimal(text: &str) -> Result<Rational, String> {
    let bad = || format!("not a number: {text:?}");
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(idx) => (&text[..idx], i64::from_str(&text[idx + 1..]).map_err(|_| bad())?),
        None => (text, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(BigInt::from_str(&digits).map_err(|_| bad())?);
    let scale = exponent - frac_part.len() as i64;
    let ten = BigRational::from_integer(BigInt::from(10));
    if scale.unsigned_abs() > 4096 {
        return Err(format!("exponent out of range in {text:?}"));
    }
    let power = num_traits::pow(ten, scale.unsigned_abs() as usize);
    if scale >= 0 {
        value *= power;
    } else {
        value /= power;
    }
    Ok(if negative { -value } else { value })
}

/// Positional decimal with 17 significant digits; parses back bit-exactly.
pub fn format_sig17(value: f64) -> String {
    format_sig(value, 17)
}

/// Positional decimal with `digits` significant digits (scientific notation
/// outside `1e-30..1e30`).
pub fn format_sig(value: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if value == 0.0 {
        return if digits == 1 { "0".to_string() } else { format!("0.{}", "0".repeat(digits - 1)) };
    }
    let sci = format!("{:.*e}", digits - 1, value.abs());
    let (mantissa, exponent) = sci.split_once('e').expect("scientific format");
    let exponent: i32 = exponent.parse().expect("exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let sign = if value < 0.0 { "-" } else { "" };
    if !(-30..=30).contains(&exponent) {
        return format!("{sign}{sci}");
    }
    let body = if exponent >= 0 {
        let split = exponent as usize + 1;
        if split >= digits.len() {
            format!("{}{}.0", digits, "0".repeat(split - digits.len()))
        } else {
            format!("{}.{}", &digits[..split], &digits[split..])
        }
    } else {
        format!("0.{}{}", "0".repeat((-exponent - 1) as usize), digits)
    };
    format!("{sign}{body}")
}

/// Mass-weighted mean of `values`; `None` when the total weight is zero.
pub(crate) fn weighted_mean<T: Scalar>(pairs: impl IntoIterator<Item = (T, T)>) -> Option<T> {
    let mut total = T::zero();
    let mut acc = T::zero();
    for (weight, value) in pairs {
        acc = acc + weight.clone() * value;
        total = total + weight;
    }
    if total.is_zero() {
        None
    } else {
        Some(acc / total)
    }
}

pub(crate) fn sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values.into_iter().fold(T::zero(), |acc, v| acc + v)
}

pub(crate) fn four<T: Scalar>() -> T {
    T::from_ratio(4, 1)
}
