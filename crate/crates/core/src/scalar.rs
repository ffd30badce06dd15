//! Floating-point abstraction shared by models, metrics and ensembles.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; every `Scalar` can represent some approximation.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Clamp `v` into `[lo, hi]`; NaN maps to `lo`.
#[inline]
pub fn clamp<T: Scalar>(v: T, lo: T, hi: T) -> T {
    if v.is_nan() || v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

/// Logistic sigmoid, evaluated in the numerically stable branch for either sign.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln σ(x)` without overflow for large negative `x`.
#[inline]
pub fn ln_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        -((-x).exp().ln_1p())
    } else {
        x - x.exp().ln_1p()
    }
}

/// Round half away from zero to the nearest integer count. Negative input saturates at 0.
#[inline]
pub fn round_half_up(v: f64) -> usize {
    if v <= 0.0 {
        0
    } else {
        (v + 0.5).floor() as usize
    }
}
