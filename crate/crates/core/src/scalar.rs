//! Floating point abstraction shared by every numeric module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the model is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` values, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
