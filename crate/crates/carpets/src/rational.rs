//! Arbitrary-precision rational scalar used for all carpet geometry.
//!
//! Values are kept in lowest terms with a positive denominator, parse from
//! and print as `"p/q"` strings (`"p"` for integers), and support the exact
//! power comparisons the scale bookkeeping relies on.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::Parse(format!("zero denominator in {numer}/{denom}")));
        }
        Ok(Rational(BigRational::new(numer.into(), denom.into())))
    }

    pub fn from_big(numer: BigInt, denom: BigInt) -> Result<Self> {
        if denom.is_zero() {
            return Err(Error::Parse("zero denominator".into()));
        }
        Ok(Rational(BigRational::new(numer, denom)))
    }

    pub fn from_int(n: i64) -> Self {
        Rational(BigRational::from_integer(n.into()))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    /// True when the value lies strictly between 0 and 1.
    pub fn is_proper_fraction(&self) -> bool {
        self.0.is_positive() && self.0 < BigRational::one()
    }

    pub fn pow(&self, exp: u32) -> Self {
        Rational(BigRational::new_raw(
            self.0.numer().pow(exp),
            self.0.denom().pow(exp),
        ))
    }

    pub fn recip(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::Precondition("reciprocal of zero".into()));
        }
        Ok(Rational(self.0.recip()))
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// Nearest double; huge magnitudes saturate, use [`Rational::ln`] for those.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Natural log of a positive rational, accurate even when the value
    /// under- or overflows f64 (e.g. composed contraction ratios).
    pub fn ln(&self) -> f64 {
        assert!(self.is_positive(), "ln of non-positive rational");
        ln_big(self.0.numer().magnitude()) - ln_big(self.0.denom().magnitude())
    }

    /// Exact conversion from a finite double.
    pub fn from_f64(x: f64) -> Result<Self> {
        BigRational::from_float(x)
            .map(Rational)
            .ok_or_else(|| Error::Parse(format!("non-finite value {x}")))
    }

    pub fn cmp_rational(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 62 {
        let v = x.to_u64().expect("fits in u64");
        assert!(v > 0, "ln of zero");
        (v as f64).ln()
    } else {
        let shift = bits - 53;
        let mant = (x >> shift).to_u64().expect("53 bits fit in u64");
        (mant as f64).ln() + shift as f64 * std::f64::consts::LN_2
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational(self.0.$method(rhs.0))
            }
        }
    };
}

impl_binop!(Add, add);
impl_binop!(Sub, sub);
impl_binop!(Mul, mul);
impl_binop!(Div, div);

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (numer, denom) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), Some(d.trim())),
            None => (s, None),
        };
        let n = BigInt::from_str(numer)
            .map_err(|e| Error::Parse(format!("bad rational {s:?}: {e}")))?;
        let d = match denom {
            Some(d) => {
                BigInt::from_str(d).map_err(|e| Error::Parse(format!("bad rational {s:?}: {e}")))?
            }
            None => BigInt::one(),
        };
        if d.is_zero() {
            return Err(Error::Parse(format!("bad rational {s:?}: zero denominator")));
        }
        Ok(Rational(BigRational::new(n, d)))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn parse_display_round_trip() {
        for s in ["1/2", "-3/7", "5", "0", "10/4"] {
            let v = r(s);
            let back: Rational = v.to_string().parse().unwrap();
            assert_eq!(v, back);
        }
        assert_eq!(r("10/4").to_string(), "5/2");
        assert_eq!(r("-6/4").to_string(), "-3/2");
    }

    #[test]
    fn zero_denominator_rejected() {
        assert!("1/0".parse::<Rational>().is_err());
        assert!(Rational::new(1, 0).is_err());
    }

    #[test]
    fn arithmetic_and_order() {
        let a = r("1/3");
        let b = r("1/2");
        assert_eq!(&a * &b, r("1/6"));
        assert_eq!(&b - &a, r("1/6"));
        assert!(a < b);
        assert!(a.is_proper_fraction());
        assert!(!r("1").is_proper_fraction());
    }

    #[test]
    fn pow_and_ln_stay_accurate_for_big_powers() {
        let third = r("1/3");
        let p = third.pow(100);
        let expected = -100.0 * 3f64.ln();
        assert!((p.ln() - expected).abs() < 1e-9 * expected.abs());

        let p = r("2/3").pow(600);
        let expected = 600.0 * (2f64.ln() - 3f64.ln());
        assert!((p.ln() - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn exact_power_comparison() {
        // 3^25 < 2^40, so (1/3)^25 > (1/2)^40.
        let lhs = r("1/3").pow(25);
        let rhs = r("1/2").pow(40);
        assert!(lhs > rhs);
    }
}
