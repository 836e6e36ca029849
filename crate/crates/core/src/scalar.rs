use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar the solver is generic over.
///
/// Implemented for `f32` and `f64`. Literal constants are written as
/// `T::lit(0.5)` instead of `T::from_f64(0.5).unwrap()`.
pub trait Scalar:
    'static
    + Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
{
    /// Residual target of the direct sparse solver, relative to `max(|b|, 1)`.
    fn direct_tolerance() -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("index representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn direct_tolerance() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn direct_tolerance() -> Self {
        1e-12
    }
}

/// Largest absolute value of a slice, zero for an empty slice.
pub fn sup_norm<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

pub fn l2_norm<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
