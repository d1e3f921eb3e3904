//! Scalar abstraction over the floating-point element type.
//!
//! Everything numeric in this crate is generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. The default tolerances are chosen for
//! `f64`; callers working in `f32` should relax them accordingly.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive};

/// Floating-point element type: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + ScalarOperand
    + fmt::Display
    + fmt::LowerExp
    + fmt::Debug
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant to the working scalar type.
///
/// Panics when the value is not representable, which cannot happen for the
/// finite literals this crate feeds it.
#[inline]
pub fn cast<T: Scalar>(value: f64) -> T {
    T::from_f64(value).expect("finite f64 literal converts to scalar type")
}

/// `n` as a scalar, for averaging and normalization.
#[inline]
pub fn cast_usize<T: Scalar>(value: usize) -> T {
    T::from_usize(value).expect("usize converts to scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn casts_roundtrip_on_f64() {
        assert_eq!(cast::<f64>(1e-12), 1e-12);
        assert_eq!(cast_usize::<f64>(7), 7.0);
        assert_eq!(cast::<f32>(0.5), 0.5f32);
    }
}
