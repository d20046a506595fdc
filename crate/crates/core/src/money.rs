//! Money in minor currency units and the exact rational helpers shared by
//! every engine.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Exact rational number used for buckets, utilities and payments.
///
/// Monetary rationals are always expressed in minor units (cents).
pub type Rational = num_rational::BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumberParseError {
    #[error("empty number")]
    Empty,
    #[error("invalid number `{0}`")]
    Invalid(String),
    #[error("`{0}` has more than two fraction digits")]
    TooPrecise(String),
    #[error("`{0}` is negative")]
    Negative(String),
    #[error("`{0}` does not fit into a money amount")]
    Overflow(String),
}

/// An amount of money counted in minor units (cents, Rappen).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: i64) -> Self {
        Money(cents)
    }

    pub const fn from_units(units: i64) -> Self {
        Money(units * 100)
    }

    pub const fn cents(self) -> i64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn to_rational(self) -> Rational {
        Rational::from_integer(BigInt::from(self.0))
    }

    /// Parses a non-negative decimal amount with at most two fraction digits,
    /// e.g. `380000`, `14893.5` or `100.00`.
    pub fn parse_decimal(s: &str) -> Result<Self, NumberParseError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(NumberParseError::Empty);
        }
        if s.starts_with('-') {
            return Err(NumberParseError::Negative(s.to_string()));
        }
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        let digits_ok = |t: &str| t.bytes().all(|b| b.is_ascii_digit());
        if whole.is_empty() || !digits_ok(whole) || !digits_ok(frac) || (s.contains('.') && frac.is_empty()) {
            return Err(NumberParseError::Invalid(s.to_string()));
        }
        if frac.len() > 2 {
            return Err(NumberParseError::TooPrecise(s.to_string()));
        }
        let overflow = || NumberParseError::Overflow(s.to_string());
        let units: i64 = whole.parse().map_err(|_| overflow())?;
        let mut cents: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| overflow())? };
        if frac.len() == 1 {
            cents *= 10;
        }
        units
            .checked_mul(100)
            .and_then(|c| c.checked_add(cents))
            .map(Money)
            .ok_or_else(overflow)
    }

    /// Compact form used in `.pb` files: whole units when there is no
    /// fraction, two fraction digits otherwise.
    pub fn to_compact_string(self) -> String {
        if self.0 % 100 == 0 {
            (self.0 / 100).to_string()
        } else {
            self.to_string()
        }
    }

    /// Rounds a rational amount of cents half-to-even.
    pub fn round_half_even(cents: &Rational) -> Money {
        Money(round_half_even(cents).to_i64().expect("money overflow"))
    }

    pub fn floor(cents: &Rational) -> Money {
        Money(cents.floor().to_integer().to_i64().expect("money overflow"))
    }

    pub fn checked_sub(self, other: Money) -> Option<Money> {
        self.0.checked_sub(other.0).filter(|v| *v >= 0).map(Money)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Money {
    type Err = NumberParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Money::parse_decimal(s)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

// Money travels as a decimal string ("20.00") so that JSON never carries floats.
impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Money::parse_decimal(&s).map_err(serde::de::Error::custom)
    }
}

pub fn rational(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Rounds a rational to the nearest integer, ties to even.
pub fn round_half_even(value: &Rational) -> BigInt {
    let floor = value.floor();
    let frac = value - &floor;
    let half = rational(1, 2);
    let base = floor.to_integer();
    match frac.cmp(&half) {
        std::cmp::Ordering::Less => base,
        std::cmp::Ordering::Greater => base + 1,
        std::cmp::Ordering::Equal => {
            if base.is_even() {
                base
            } else {
                base + 1
            }
        }
    }
}

/// Parses a non-negative rational written as an integer, a decimal
/// (`0.05`) or a fraction (`1/3`).
pub fn parse_rational(s: &str) -> Result<Rational, NumberParseError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(NumberParseError::Empty);
    }
    let invalid = || NumberParseError::Invalid(s.to_string());
    let value = if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| invalid())?;
        let d: BigInt = d.trim().parse().map_err(|_| invalid())?;
        if d.is_zero() {
            return Err(invalid());
        }
        Rational::new(n, d)
    } else {
        let negative = s.starts_with('-');
        let body = s.trim_start_matches(['-', '+']);
        let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
        if (whole.is_empty() && frac.is_empty())
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(invalid());
        }
        let digits = format!("{whole}{frac}");
        let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().map_err(|_| invalid())? };
        let denom = num_traits::pow(BigInt::from(10), frac.len());
        let v = Rational::new(numer, denom);
        if negative {
            -v
        } else {
            v
        }
    };
    if value.is_negative() {
        return Err(NumberParseError::Negative(s.to_string()));
    }
    Ok(value)
}

/// Canonical text form of a rational: a plain decimal when the value has a
/// terminating expansion, `n/d` otherwise. [`parse_rational`] inverts it.
pub fn format_rational(value: &Rational) -> String {
    let mut denom = value.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let ten = BigInt::from(10);
    let (mut twos, mut fives) = (0usize, 0usize);
    while (&denom % &two).is_zero() {
        denom /= &two;
        twos += 1;
    }
    while (&denom % &five).is_zero() {
        denom /= &five;
        fives += 1;
    }
    if denom != BigInt::from(1) {
        return format!("{}/{}", value.numer(), value.denom());
    }
    let places = twos.max(fives);
    if places == 0 {
        return value.numer().to_string();
    }
    let scaled = (value * Rational::from_integer(num_traits::pow(ten, places))).to_integer();
    let negative = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let digits = format!("{digits:0>width$}", width = places + 1);
    let (whole, frac) = digits.split_at(digits.len() - places);
    format!("{}{whole}.{frac}", if negative { "-" } else { "" })
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Serde adapter for rationals as canonical strings.
pub mod rational_str {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_number_signed(&s).map_err(serde::de::Error::custom)
    }

    fn parse_number_signed(s: &str) -> Result<Rational, NumberParseError> {
        match s.strip_prefix('-') {
            Some(rest) => parse_rational(rest).map(|v| -v),
            None => parse_rational(s),
        }
    }
}
