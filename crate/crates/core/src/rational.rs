//! Exact arithmetic on schedule times.
//!
//! Every time, quantity and inventory level of a cyclic schedule is a
//! `BigRational`. Finite `f64` inputs convert exactly (they are dyadic), so
//! no rounding enters between a floating point cycle length and its exact
//! evaluation.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer};
use serde::ser::{SerializeTuple, Serializer};
use serde::Deserialize;
use serde_json::value::RawValue;

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Exact conversion of a finite float.
pub fn from_f64(x: f64) -> Result<Rational> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    Rational::from_float(x).ok_or(Error::NonFinite(x))
}

pub fn to_f64(r: &Rational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // Huge numerator and denominator can overflow individually.
    let shift = r.numer().bits().max(r.denom().bits()).saturating_sub(1000) as usize;
    let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

/// Least common multiple of two positive rationals: lcm of numerators over
/// gcd of denominators (both in lowest terms).
pub fn lcm(a: &Rational, b: &Rational) -> Rational {
    let n = a.numer().lcm(b.numer());
    let d = a.denom().gcd(b.denom());
    Rational::new(n, d)
}

/// Least common multiple of the denominators.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    let mut d = BigInt::one();
    for v in values {
        if !v.denom().is_one() && !(&d % v.denom()).is_zero() {
            d = d.lcm(v.denom());
        }
    }
    d
}

/// Numerator of `r` over the common denominator `d`.
pub fn over(r: &Rational, d: &BigInt) -> BigInt {
    if r.denom() == d {
        r.numer().clone()
    } else {
        r.numer() * (d / r.denom())
    }
}

/// `x mod m` in `[0, m)` for positive `m`.
pub fn rem_euclid(x: &Rational, m: &Rational) -> Rational {
    let q = (x / m).floor();
    let r = x - q * m;
    if r.is_negative() {
        r + m
    } else {
        r
    }
}

/// `2^k` for any integer `k`.
pub fn pow2(k: i32) -> Rational {
    if k >= 0 {
        Rational::from_integer(BigInt::one() << k as usize)
    } else {
        Rational::new(BigInt::one(), BigInt::one() << (-k) as usize)
    }
}

/// Serde adapter writing a rational as `[num, den]` with arbitrarily large
/// JSON integers.
pub mod pair {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        let num = RawValue::from_string(r.numer().to_string()).map_err(serde::ser::Error::custom)?;
        let den = RawValue::from_string(r.denom().to_string()).map_err(serde::ser::Error::custom)?;
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&num)?;
        t.serialize_element(&den)?;
        t.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let raw: Vec<Box<RawValue>> = Vec::deserialize(d)?;
        if raw.len() != 2 {
            return Err(de::Error::custom("rational must be a [num, den] pair"));
        }
        let num = parse_int(raw[0].get()).map_err(de::Error::custom)?;
        let den = parse_int(raw[1].get()).map_err(de::Error::custom)?;
        if den.is_zero() {
            return Err(de::Error::custom("zero denominator"));
        }
        Ok(Rational::new(num, den))
    }
}

pub(crate) fn parse_int(text: &str) -> Result<BigInt> {
    let t = text.trim();
    t.parse::<BigInt>()
        .map_err(|_| Error::Parse(format!("expected an integer, got {t}")))
}
