//! Floating point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Real scalar used by the solvers: `f32` or `f64`.
///
/// Tolerances are expressed in `f64` and converted with [`Scalar::of`]; the
/// default tolerances are only meaningful for `f64`.
pub trait Scalar:
    'static + Send + Sync + Float + FloatConst + FromPrimitive + NumAssign + Sum + Default + Debug + Display + LowerExp
{
    /// Converts an `f64` literal or input value.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    /// Converts back to `f64` for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Maximum absolute value of a slice, zero when empty.
pub fn max_abs<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}
