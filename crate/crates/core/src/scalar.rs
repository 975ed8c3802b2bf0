//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar the toolkit is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Serde helpers that keep `±inf` (and `NaN`) representable in JSON.
///
/// Finite values are written as numbers; non-finite values as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
pub mod extended {
    use super::Scalar;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Scalar, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
        let v = value.as_f64();
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        let v = match Repr::deserialize(d)? {
            Repr::Num(v) => v,
            Repr::Str(s) => parse_extended(&s).ok_or_else(|| D::Error::custom(format!("not a number: {s:?}")))?,
        };
        T::from_f64(v).ok_or_else(|| D::Error::custom("value not representable"))
    }

    pub fn parse_extended(s: &str) -> Option<f64> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
            "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
            other => other.parse().ok(),
        }
    }

    /// Same as the parent module, for `Option<T>` (`None` is `null`).
    pub mod option {
        use super::super::Scalar;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<T: Scalar, S: Serializer>(value: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
            match value {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Option<T>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap<T: Scalar>(#[serde(with = "super")] T);
            Ok(Option::<Wrap<T>>::deserialize(d)?.map(|w| w.0))
        }
    }
}
