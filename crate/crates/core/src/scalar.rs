//! Floating point abstraction used by the estimators and probability vectors.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type for probabilities and information quantities: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from a count.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable as float")
    }

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `x * log2(x)` with the `0 log 0 = 0` convention.
    fn xlog2x(self) -> Self {
        if self <= Self::zero() {
            Self::zero()
        } else {
            self * self.log2()
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
