//! Scalar abstractions shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, Sub};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive, Zero};

/// Floating point scalar used by geometry, channel and learning code (f32 or f64).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Gauss error function.
    fn erf(self) -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Real for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

/// Edge weight usable by the graph algorithms.
///
/// Only ordering, addition and subtraction are needed, so exact types such as
/// `i64` or `num_rational::Ratio<i64>` qualify alongside the floats.
pub trait Weight: Copy + PartialOrd + Zero + Add<Output = Self> + Sub<Output = Self> + Debug + Send + Sync {}

impl<T> Weight for T where T: Copy + PartialOrd + Zero + Add<Output = T> + Sub<Output = T> + Debug + Send + Sync {}

/// Total order on weights; incomparable values (NaN) compare equal.
#[inline]
pub(crate) fn cmp_weight<W: Weight>(a: &W, b: &W) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}
