//! Scalar abstraction shared by every load and time computation.
//!
//! All planner arithmetic is written against [`Scalar`]. The exact
//! instantiation is [`Rational`] (arbitrary-precision fraction); `f64` and
//! `f32` are supported for quick exploratory sweeps where exactness does not
//! matter.

use std::fmt::Debug;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Exact rational number used throughout the crate.
pub type Rational = BigRational;

/// Numeric type usable for loads, costs and times.
pub trait Scalar: Clone + Debug + PartialOrd + Num + Send + Sync + 'static {
    /// `num / den` converted into this scalar. `den` must be nonzero.
    fn from_ratio(num: &BigInt, den: &BigInt) -> Self;

    /// Exact value, if the scalar has one (floats convert exactly, NaN/inf do not).
    fn to_exact(&self) -> Option<Rational>;

    fn to_f64(&self) -> f64;

    /// `true` when arithmetic on this type is exact.
    fn is_exact() -> bool;

    /// Smallest integer `>= self`, or `None` for negative / non-finite values.
    fn ceil_u64(&self) -> Option<u64>;

    fn from_exact(value: &Rational) -> Self {
        Self::from_ratio(value.numer(), value.denom())
    }

    fn from_u64(value: u64) -> Self {
        Self::from_ratio(&BigInt::from(value), &BigInt::one())
    }

    fn frac(num: u64, den: u64) -> Self {
        Self::from_ratio(&BigInt::from(num), &BigInt::from(den))
    }

    fn to_wire(&self) -> WireScalar;

    fn from_wire(wire: &WireScalar) -> Result<Self, String> {
        Ok(Self::from_exact(&wire.to_exact()?))
    }
}

impl Scalar for Rational {
    fn from_ratio(num: &BigInt, den: &BigInt) -> Self {
        BigRational::new(num.clone(), den.clone())
    }

    fn to_exact(&self) -> Option<Rational> {
        Some(self.clone())
    }

    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }

    fn is_exact() -> bool {
        true
    }

    fn ceil_u64(&self) -> Option<u64> {
        if self.is_negative() {
            return None;
        }
        self.ceil().to_integer().to_u64()
    }

    fn from_exact(value: &Rational) -> Self {
        value.clone()
    }

    fn to_wire(&self) -> WireScalar {
        WireScalar::Exact {
            num: self.numer().to_string(),
            den: self.denom().to_string(),
        }
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_ratio(num: &BigInt, den: &BigInt) -> Self {
                ratio_to_f64(&BigRational::new(num.clone(), den.clone())) as $t
            }

            fn to_exact(&self) -> Option<Rational> {
                BigRational::from_float(*self)
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn is_exact() -> bool {
                false
            }

            fn ceil_u64(&self) -> Option<u64> {
                if !self.is_finite() || *self < 0.0 {
                    return None;
                }
                Some(self.ceil() as u64)
            }

            fn to_wire(&self) -> WireScalar {
                WireScalar::Float(*self as f64)
            }
        }
    };
}

float_scalar!(f64);
float_scalar!(f32);

fn ratio_to_f64(value: &Rational) -> f64 {
    if let (Some(n), Some(d)) = (value.numer().to_f64(), value.denom().to_f64()) {
        if n.is_finite() && d.is_finite() {
            return n / d;
        }
    }
    // Huge operands: scale both down by a common power of two first.
    let bits = value.numer().bits().max(value.denom().bits());
    let shift = bits.saturating_sub(1000) as usize;
    let n = (value.numer() >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (value.denom() >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

/// JSON representation of a scalar: exact values as `{"num": "..", "den": ".."}`,
/// floats as plain numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireScalar {
    Exact { num: String, den: String },
    Float(f64),
}

impl WireScalar {
    pub fn to_exact(&self) -> Result<Rational, String> {
        match self {
            WireScalar::Exact { num, den } => {
                let n = BigInt::from_str(num).map_err(|e| format!("bad numerator {num:?}: {e}"))?;
                let d = BigInt::from_str(den).map_err(|e| format!("bad denominator {den:?}: {e}"))?;
                if d.is_zero() {
                    return Err("zero denominator".into());
                }
                Ok(BigRational::new(n, d))
            }
            WireScalar::Float(f) => {
                BigRational::from_float(*f).ok_or_else(|| format!("non-finite number {f}"))
            }
        }
    }
}

/// Parses `"3"`, `"-2/7"`, `"0.125"` or `"1e-3"` into an exact rational.
/// Decimal strings are converted exactly (`"0.1"` is `1/10`, not the nearest double).
pub fn parse_rational(text: &str) -> Result<Rational, String> {
    let s = text.trim();
    if s.is_empty() {
        return Err("empty number".into());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
        let d = BigInt::from_str(d.trim()).map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let exp = i32::from_str(&s[pos + 1..]).map_err(|e| format!("bad exponent in {s:?}: {e}"))?;
            (&s[..pos], exp)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(format!("not a number: {s:?}"));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(format!("not a number: {s:?}"));
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut num = BigInt::from_str(if all_digits.is_empty() { "0" } else { &all_digits })
        .map_err(|e| format!("bad number {s:?}: {e}"))?;
    if negative {
        num = -num;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u8);
    let value = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(value)
}

/// Decimal rendering of an exact rational with `digits` fractional digits
/// (rounded half away from zero).
pub fn to_decimal(value: &Rational, digits: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10u8), digits);
    let scaled = value * BigRational::from_integer(scale.clone());
    let rounded = scaled.round().to_integer();
    let negative = rounded.is_negative();
    let (int_part, frac_part) = rounded.abs().div_rem(&scale);
    let sign = if negative { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{:0>width$}", frac_part.to_string(), width = digits)
    }
}

/// `serde(with = ...)` adapter for generic scalar fields.
pub mod wire {
    use super::{Scalar, WireScalar};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Scalar, S: Serializer>(value: &T, serializer: S) -> Result<S::Ok, S::Error> {
        value.to_wire().serialize(serializer)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(deserializer: D) -> Result<T, D::Error> {
        let wire = WireScalar::deserialize(deserializer)?;
        T::from_wire(&wire).map_err(serde::de::Error::custom)
    }
}

/// `serde(with = ...)` adapter for `Option<Scalar>` fields.
pub mod wire_opt {
    use super::{Scalar, WireScalar};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Scalar, S: Serializer>(value: &Option<T>, serializer: S) -> Result<S::Ok, S::Error> {
        value.as_ref().map(Scalar::to_wire).serialize(serializer)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(deserializer: D) -> Result<Option<T>, D::Error> {
        Option::<WireScalar>::deserialize(deserializer)?
            .map(|w| T::from_wire(&w).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Shorthand for building exact rationals in code and tests.
pub fn ratio(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational from an integer.
pub fn int(value: i64) -> Rational {
    BigRational::from_integer(BigInt::from(value))
}

pub(crate) fn max_of<T: Scalar>(a: T, b: T) -> T {
    if a >= b {
        a
    } else {
        b
    }
}
