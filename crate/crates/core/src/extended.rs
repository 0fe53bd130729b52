use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// A real number or one of the two infinities.
///
/// Rate functions take the value `+inf` outside the convex hull of the
/// support, and the regime thresholds carry `-inf`/`+inf` sentinels at
/// both ends. Finite values are never NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    pub const ZERO: Self = ExtendedReal::Finite(0.0);

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    /// Maps to `f64`, infinities included.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedReal::NegInf => f64::NEG_INFINITY,
            ExtendedReal::Finite(x) => x,
            ExtendedReal::PosInf => f64::INFINITY,
        }
    }

    /// `self - other`, or `None` for `inf - inf`.
    pub fn checked_sub(self, other: Self) -> Option<Self> {
        use ExtendedReal::*;
        match (self, other) {
            (Finite(a), Finite(b)) => Some(Finite(a - b)),
            (PosInf, PosInf) | (NegInf, NegInf) => None,
            (PosInf, _) | (_, NegInf) => Some(PosInf),
            (NegInf, _) | (_, PosInf) => Some(NegInf),
        }
    }

    /// `self + other`, or `None` for `inf + (-inf)`.
    pub fn checked_add(self, other: Self) -> Option<Self> {
        use ExtendedReal::*;
        match (self, other) {
            (Finite(a), Finite(b)) => Some(Finite(a + b)),
            (PosInf, NegInf) | (NegInf, PosInf) => None,
            (PosInf, _) | (_, PosInf) => Some(PosInf),
            (NegInf, _) | (_, NegInf) => Some(NegInf),
        }
    }

    /// `max(self, 0)`.
    pub fn positive_part(self) -> Self {
        if self < Self::ZERO {
            Self::ZERO
        } else {
            self
        }
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        use ExtendedReal::*;
        match (self, other) {
            (Finite(a), Finite(b)) => a.total_cmp(b),
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (PosInf, _) | (_, NegInf) => Ordering::Greater,
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self.total_cmp(&other) == Ordering::Less {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self.total_cmp(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    /// Strict `x < self` for a finite `x`.
    #[inline]
    pub fn gt_f64(self, x: f64) -> bool {
        match self {
            ExtendedReal::NegInf => false,
            ExtendedReal::Finite(v) => x < v,
            ExtendedReal::PosInf => true,
        }
    }

    /// `x >= self` for a finite `x`.
    #[inline]
    pub fn le_f64(self, x: f64) -> bool {
        !self.gt_f64(x)
    }
}

impl From<f64> for ExtendedReal {
    fn from(x: f64) -> Self {
        debug_assert!(!x.is_nan(), "ExtendedReal from NaN");
        if x == f64::INFINITY {
            ExtendedReal::PosInf
        } else if x == f64::NEG_INFINITY {
            ExtendedReal::NegInf
        } else {
            ExtendedReal::Finite(x)
        }
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.total_cmp(other))
    }
}

impl Add for ExtendedReal {
    type Output = ExtendedReal;

    /// Panics on `inf + (-inf)`; use [`ExtendedReal::checked_add`] where that can occur.
    fn add(self, rhs: Self) -> Self {
        self.checked_add(rhs).expect("inf + -inf is undefined")
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::NegInf => f.write_str("-inf"),
            ExtendedReal::Finite(x) => write!(f, "{x}"),
            ExtendedReal::PosInf => f.write_str("inf"),
        }
    }
}

// JSON has no infinities: finite values are numbers, the others the strings "inf"/"-inf".
impl Serialize for ExtendedReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtendedReal::Finite(x) => serializer.serialize_f64(*x),
            ExtendedReal::PosInf => serializer.serialize_str("inf"),
            ExtendedReal::NegInf => serializer.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ExtVisitor;

        impl Visitor<'_> for ExtVisitor {
            type Value = ExtendedReal;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                if v.is_nan() {
                    return Err(E::custom("NaN is not an extended real"));
                }
                Ok(ExtendedReal::from(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(ExtendedReal::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(ExtendedReal::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                match v {
                    "inf" | "+inf" => Ok(ExtendedReal::PosInf),
                    "-inf" => Ok(ExtendedReal::NegInf),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }

        deserializer.deserialize_any(ExtVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ExtendedReal::*;

    #[test]
    fn infinite_arithmetic() {
        assert_eq!(Finite(1.0) + PosInf, PosInf);
        assert_eq!(PosInf.checked_sub(PosInf), None);
        assert_eq!(PosInf.checked_add(NegInf), None);
        assert_eq!(Finite(2.0).checked_sub(PosInf), Some(NegInf));
        assert_eq!(Finite(-3.0).positive_part(), Finite(0.0));
        assert_eq!(PosInf.positive_part(), PosInf);
    }

    #[test]
    fn ordering_is_total() {
        let mut xs = vec![PosInf, Finite(1.0), NegInf, Finite(-2.0), Finite(0.0)];
        xs.sort_by(ExtendedReal::total_cmp);
        assert_eq!(
            xs,
            vec![NegInf, Finite(-2.0), Finite(0.0), Finite(1.0), PosInf]
        );
        assert!(Finite(1e300) < PosInf);
        assert!(NegInf < Finite(-1e300));
    }

    #[test]
    fn threshold_comparisons() {
        assert!(PosInf.gt_f64(1e308));
        assert!(!NegInf.gt_f64(-1e308));
        assert!(Finite(0.5).le_f64(0.5));
        assert!(Finite(0.5).gt_f64(0.4999));
    }

    #[test]
    fn json_round_trip() {
        let xs = vec![NegInf, Finite(0.25), PosInf];
        let s = serde_json::to_string(&xs).unwrap();
        assert_eq!(s, r#"["-inf",0.25,"inf"]"#);
        let back: Vec<ExtendedReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, xs);
    }
}
