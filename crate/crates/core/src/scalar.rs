//! Scalar types usable for probabilities and rewards.
//!
//! Everything in the engine is generic over [`Scalar`]. The exact rational
//! types are the ones verdicts should be computed with: equality of segment
//! distributions is decided by `==`, so a float scalar only gives a quick
//! approximate answer.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{Signed, ToPrimitive, Zero};

/// Numeric field used for probabilities and rewards.
pub trait Scalar:
    Clone + Debug + Display + PartialEq + PartialOrd + Signed + Sum + Send + Sync + 'static
{
    /// `true` when `==` is exact field equality.
    const EXACT: bool;

    fn from_ratio(numer: i64, denom: i64) -> Self;

    /// Parses `"p/q"` or an integer `"p"`. Float scalars also accept decimals.
    fn parse_ratio(text: &str) -> Option<Self>;

    /// Canonical text form. Exact types render `p/q` in lowest terms
    /// (`p` when the denominator is 1), so equal values render equally.
    fn canonical(&self) -> String;

    fn to_f64(&self) -> f64;

    /// Equality used by structural validation (probability sums).
    fn same(&self, other: &Self) -> bool {
        self == other
    }
}

fn split_ratio(text: &str) -> Option<(&str, Option<&str>)> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    match text.split_once('/') {
        Some((n, d)) => Some((n.trim(), Some(d.trim()))),
        None => Some((text, None)),
    }
}

fn is_integer_literal(s: &str) -> bool {
    let digits = s.strip_prefix('-').or_else(|| s.strip_prefix('+')).unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_ratio(numer: i64, denom: i64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }

    fn parse_ratio(text: &str) -> Option<Self> {
        let (n, d) = split_ratio(text)?;
        if !is_integer_literal(n) {
            return None;
        }
        let numer: BigInt = n.parse().ok()?;
        let denom: BigInt = match d {
            Some(d) if is_integer_literal(d) => d.parse().ok()?,
            Some(_) => return None,
            None => BigInt::from(1),
        };
        if denom.is_zero() {
            return None;
        }
        Some(BigRational::new(numer, denom))
    }

    fn canonical(&self) -> String {
        self.to_string()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for Rational64 {
    const EXACT: bool = true;

    fn from_ratio(numer: i64, denom: i64) -> Self {
        Rational64::new(numer, denom)
    }

    fn parse_ratio(text: &str) -> Option<Self> {
        let (n, d) = split_ratio(text)?;
        if !is_integer_literal(n) {
            return None;
        }
        let numer: i64 = n.parse().ok()?;
        let denom: i64 = match d {
            Some(d) if is_integer_literal(d) => d.parse().ok()?,
            Some(_) => return None,
            None => 1,
        };
        if denom == 0 {
            return None;
        }
        Some(Rational64::new(numer, denom))
    }

    fn canonical(&self) -> String {
        self.to_string()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }

    fn parse_ratio(text: &str) -> Option<Self> {
        let (n, d) = split_ratio(text)?;
        let numer: f64 = n.parse().ok()?;
        let denom: f64 = match d {
            Some(d) => d.parse().ok()?,
            None => 1.0,
        };
        if denom == 0.0 || !numer.is_finite() || !denom.is_finite() {
            return None;
        }
        Some(numer / denom)
    }

    fn canonical(&self) -> String {
        if *self == 0.0 {
            // fold -0.0 into 0.0
            return "0".to_string();
        }
        format!("{self:?}")
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn same(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-9
    }
}
