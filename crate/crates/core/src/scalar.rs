//! Floating-point scalar abstraction shared by every numeric module.

use ndarray::NdFloat;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    NdFloat + FloatConst + FromPrimitive + ToPrimitive + Default + Serialize + DeserializeOwned
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn of(v: f64) -> Self;

    fn of_usize(n: usize) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn of_usize(n: usize) -> Self {
        n as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn of_usize(n: usize) -> Self {
        n as f64
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Lower bound applied to every scale statistic and naive-error denominator.
pub const EPSILON: f64 = 1e-8;

#[inline]
pub fn epsilon<S: Scalar>() -> S {
    S::of(EPSILON)
}
