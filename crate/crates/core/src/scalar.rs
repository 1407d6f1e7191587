use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Field-like scalar: the four operations plus a (partial) order.
///
/// Implemented for the primitive floats and for exact rationals, which is
/// what the strength rule and rank metrics need.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync {
    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + Debug + Send + Sync {}

/// Floating point scalar used by the trained models and embeddings.
pub trait Real:
    Scalar
    + Float
    + FromPrimitive
    + ToPrimitive
    + Copy
    + Default
    + Sum
    + Display
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
