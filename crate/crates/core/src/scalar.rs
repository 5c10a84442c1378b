//! Numeric field abstraction shared by the floating-point and exact-rational
//! code paths.
//!
//! Reference data in model files is rational, so the multiplier polytope,
//! the MFCQ program and the bordered determinants at the reference point can
//! be evaluated without rounding. Sampled neighbourhood points use `f64`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    /// Whether arithmetic is exact (no pivot tolerance needed).
    const EXACT: bool;

    fn from_rational(q: &Rational, approx: f64) -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn abs_val(&self) -> Self;

    /// Pivot tolerance for elimination and simplex ratio tests.
    fn pivot_eps() -> Self;

    fn is_negligible(&self) -> bool {
        self.abs_val() <= Self::pivot_eps()
    }

    fn is_positive(&self) -> bool {
        *self > Self::pivot_eps()
    }

    fn is_negative(&self) -> bool {
        *self < -Self::pivot_eps()
    }

    fn from_i64(v: i64) -> Self;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_rational(_q: &Rational, approx: f64) -> Self {
        approx
    }

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }

    fn pivot_eps() -> Self {
        1e-11
    }

    fn from_i64(v: i64) -> Self {
        v as f64
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_rational(q: &Rational, _approx: f64) -> Self {
        q.clone()
    }

    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).unwrap_or_else(Rational::zero)
    }

    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }

    fn pivot_eps() -> Self {
        Rational::zero()
    }

    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
}

pub fn rational_to_f64(q: &Rational) -> f64 {
    if let Some(v) = ToPrimitive::to_f64(q) {
        if v.is_finite() {
            return v;
        }
    }
    // Fall back to long division for very large numerators/denominators.
    let n = q.numer().to_f64().unwrap_or(f64::NAN);
    let d = q.denom().to_f64().unwrap_or(f64::NAN);
    n / d
}

/// Exact rational from a decimal literal such as `0.125` or `3`.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let (int_part, frac_part) = match text.split_once('.') {
        Some((a, b)) => (a, b),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    Some(Rational::new(numer, denom))
}

pub fn rational_to_string(q: &Rational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals_are_exact() {
        let q = parse_decimal("0.125").unwrap();
        assert_eq!(q, Rational::new(BigInt::from(1), BigInt::from(8)));
        assert_eq!(parse_decimal("3").unwrap(), Rational::from_integer(BigInt::from(3)));
        assert!(parse_decimal("1.2.3").is_none());
        assert!(parse_decimal(".").is_none());
    }

    #[test]
    fn rational_round_trip_to_string() {
        let q = Rational::new(BigInt::from(-3), BigInt::from(8));
        assert_eq!(rational_to_string(&q), "-3/8");
        assert_eq!(rational_to_f64(&q), -0.375);
    }
}
