//! Natural-log probabilities.
//!
//! Every score in the crate is a [`LogProb`]. Adding two values multiplies the
//! underlying probabilities; `-inf` is probability zero and absorbs addition.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialised as a JSON number, or as the string `"-inf"` for probability zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogProb(#[serde(with = "extended_f64")] pub f64);

impl LogProb {
    pub const ONE: LogProb = LogProb(0.0);
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);

    /// Log of a linear-domain probability. `0.0` maps to `-inf`.
    pub fn from_prob(p: f64) -> Self {
        LogProb(p.ln())
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// Total order; NaN sorts below everything.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self.0.is_nan(), other.0.is_nan()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (false, false) => self.0.total_cmp(&other.0),
        }
    }

    /// `self - other` in the log domain (a ratio of probabilities), with
    /// `ZERO - ZERO = ZERO` instead of NaN.
    pub fn ratio(self, denominator: LogProb) -> LogProb {
        if self.is_zero() {
            LogProb::ZERO
        } else {
            LogProb(self.0 - denominator.0)
        }
    }
}

impl Add for LogProb {
    type Output = LogProb;

    fn add(self, rhs: Self) -> Self::Output {
        // -inf + anything finite stays -inf; guard the (-inf) + (+inf) corner too.
        if self.is_zero() || rhs.is_zero() {
            LogProb::ZERO
        } else {
            LogProb(self.0 + rhs.0)
        }
    }
}

impl AddAssign for LogProb {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for LogProb {
    type Output = LogProb;

    fn sub(self, rhs: Self) -> Self::Output {
        self.ratio(rhs)
    }
}

impl Neg for LogProb {
    type Output = f64;

    fn neg(self) -> f64 {
        -self.0
    }
}

impl Sum for LogProb {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(LogProb::ONE, |acc, x| acc + x)
    }
}

impl From<f64> for LogProb {
    fn from(v: f64) -> Self {
        LogProb(v)
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Serde adapter for floats that may be infinite: JSON has no literal for
/// them, so they travel as the strings `"inf"`, `"-inf"` and `"nan"`.
pub mod extended_f64 {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct ExtVisitor;

    impl Visitor<'_> for ExtVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(ExtVisitor)
    }
}

/// `log(Σ exp(v_i))` with max subtraction.
pub fn log_sum_exp(values: &[LogProb]) -> Result<LogProb> {
    let max = values
        .iter()
        .copied()
        .max_by(LogProb::total_cmp)
        .ok_or(Error::EmptyLogSum)?;
    if max.is_zero() || !max.0.is_finite() {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v.0 - max.0).exp()).sum();
    Ok(LogProb(max.0 + sum.ln()))
}

/// Like [`log_sum_exp`] but an empty input is probability zero.
pub fn log_sum_exp_or_zero(values: impl IntoIterator<Item = LogProb>) -> LogProb {
    let values: Vec<LogProb> = values.into_iter().collect();
    log_sum_exp(&values).unwrap_or(LogProb::ZERO)
}

/// `log(exp(a) + exp(b))`.
pub fn log_add(a: LogProb, b: LogProb) -> LogProb {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    let (hi, lo) = if a.0 >= b.0 { (a.0, b.0) } else { (b.0, a.0) };
    LogProb(hi + (lo - hi).exp().ln_1p())
}
