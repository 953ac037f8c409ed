//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
///
/// Linear algebra comes from [`RealField`]; conversions to and from `f64`
/// come from num-traits. Random draws are always made in `f64` and then
/// converted, so a given seed yields the same stream for either width.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Unit roundoff of the type.
    fn unit_roundoff() -> Self;

    #[inline]
    fn is_finite_value(self) -> bool {
        self.to_f64().is_some_and(f64::is_finite)
    }
}

impl Real for f32 {
    fn unit_roundoff() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn unit_roundoff() -> Self {
        f64::EPSILON
    }
}
