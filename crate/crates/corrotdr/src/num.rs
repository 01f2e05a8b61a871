//! Scalar abstraction: the numeric core is generic over [`Real`].

use num_traits::{AsPrimitive, Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the toolkit operates on. Implemented for `f32` and
/// `f64`.
///
/// `f64` is the default everywhere and the only choice that delivers
/// picosecond resolution on delays of tens of microseconds (the `f32`
/// mantissa bottoms out near 2 ps at that scale). The `f32` instantiation is
/// useful for storage-bound experiments and for checking that algorithms do
/// not depend on a particular precision.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + AsPrimitive<f64>
    + rustfft::FftNum
    + std::iter::Sum
    + std::fmt::Display
    + Default
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 value representable as Real")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize value representable as Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}
