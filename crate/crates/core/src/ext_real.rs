//! Extended reals `ℝ ∪ {+∞, −∞}` with a total order.
//!
//! Values are never NaN and `-0.0` is normalised to `0.0`, so equality and
//! ordering are plain comparisons on the wrapped `f64`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Neg;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);
    pub const NEG_INFINITY: ExtReal = ExtReal(f64::NEG_INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    /// Wraps `v`. Panics on NaN.
    pub fn new(v: f64) -> Self {
        Self::try_new(v).expect("ExtReal cannot hold NaN")
    }

    pub fn try_new(v: f64) -> Option<Self> {
        if v.is_nan() {
            None
        } else if v == 0.0 {
            Some(ExtReal(0.0))
        } else {
            Some(ExtReal(v))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    #[inline]
    pub fn is_pos_inf(self) -> bool {
        self.0 == f64::INFINITY
    }

    #[inline]
    pub fn is_neg_inf(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    #[inline]
    pub fn min(self, other: Self) -> Self {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    #[inline]
    pub fn max(self, other: Self) -> Self {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }

    /// `self − other`, with `∞ − ∞` (same sign) taken as 0.
    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, other: Self) -> Self {
        if self.0.is_infinite() && self.0 == other.0 {
            ExtReal::ZERO
        } else {
            ExtReal::new(self.0 - other.0)
        }
    }

    /// Supremum of an iterator; `−∞` when empty.
    pub fn sup<I: IntoIterator<Item = ExtReal>>(it: I) -> Self {
        it.into_iter().fold(ExtReal::NEG_INFINITY, ExtReal::max)
    }

    /// Infimum of an iterator; `+∞` when empty.
    pub fn inf<I: IntoIterator<Item = ExtReal>>(it: I) -> Self {
        it.into_iter().fold(ExtReal::INFINITY, ExtReal::min)
    }
}

impl Eq for ExtReal {}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;
    fn neg(self) -> ExtReal {
        ExtReal::new(-self.0)
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal::new(v)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pos_inf() {
            write!(f, "inf")
        } else if self.is_neg_inf() {
            write!(f, "-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for ExtReal {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "+inf" | "Infinity" => Ok(ExtReal::INFINITY),
            "-inf" | "-Infinity" => Ok(ExtReal::NEG_INFINITY),
            t => t
                .parse::<f64>()
                .ok()
                .and_then(ExtReal::try_new)
                .ok_or_else(|| format!("not an extended real: {t:?}")),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_pos_inf() {
            s.serialize_str("inf")
        } else if self.is_neg_inf() {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = ExtReal;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtReal, E> {
                ExtReal::try_new(v).ok_or_else(|| E::custom("NaN"))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtReal, E> {
                Ok(ExtReal::new(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtReal, E> {
                Ok(ExtReal::new(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtReal, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_identities() {
        let x = ExtReal::new(2.5);
        assert_eq!(-ExtReal::INFINITY, ExtReal::NEG_INFINITY);
        assert_eq!(ExtReal::INFINITY.min(x), x);
        assert_eq!(ExtReal::NEG_INFINITY.max(x), x);
        assert_eq!(ExtReal::sup(std::iter::empty()), ExtReal::NEG_INFINITY);
        assert_eq!(ExtReal::inf(std::iter::empty()), ExtReal::INFINITY);
    }

    #[test]
    fn negative_zero_is_normalised() {
        assert_eq!(ExtReal::new(-0.0).value().to_bits(), 0.0f64.to_bits());
        assert_eq!(-ExtReal::ZERO, ExtReal::ZERO);
    }

    #[test]
    fn subtraction_of_equal_infinities() {
        assert_eq!(ExtReal::INFINITY.sub(ExtReal::INFINITY), ExtReal::ZERO);
        assert_eq!(ExtReal::new(1.0).sub(ExtReal::INFINITY), ExtReal::NEG_INFINITY);
    }

    #[test]
    fn json_round_trip() {
        let vals = vec![ExtReal::INFINITY, ExtReal::NEG_INFINITY, ExtReal::new(-1.25)];
        let s = serde_json::to_string(&vals).unwrap();
        assert_eq!(s, r#"["inf","-inf",-1.25]"#);
        let back: Vec<ExtReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vals);
    }
}
