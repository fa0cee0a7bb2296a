use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used by the numeric stages: `f32` or `f64`.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; constants in the algorithms are written in `f64`.
    #[inline]
    fn of(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cosine similarity; `None` when either vector has zero length.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    let denom = norm(a) * norm(b);
    if denom > T::zero() {
        Some(dot(a, b) / denom)
    } else {
        None
    }
}

/// Unit-length copy of `a`; `None` for the zero vector.
pub fn normalized<T: Scalar>(a: &[T]) -> Option<Vec<T>> {
    let n = norm(a);
    if n > T::zero() {
        Some(a.iter().map(|&x| x / n).collect())
    } else {
        None
    }
}

/// Numerically stable `ln σ(x)`.
#[inline]
pub fn log_sigmoid<T: Scalar>(x: T) -> T {
    // ln σ(x) = -softplus(-x)
    let neg = -x;
    -(neg.max(T::zero()) + (-neg.abs()).exp().ln_1p())
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
