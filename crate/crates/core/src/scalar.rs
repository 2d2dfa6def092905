//! Floating-point scalar abstraction for the simulator core.
//!
//! All numerical modules are generic over [`Scalar`] so the same code runs in
//! `f64` (the default, see the aliases at the crate root) or `f32`. Production
//! runs should use `f64`; `f32` is mainly useful for memory-bound experiments.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Scalar type requirements for all simulator math.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` literal into the active scalar type.
///
/// Panics if the value is not representable, which cannot happen for the
/// finite constants used throughout this crate.
#[inline]
pub fn lit<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("constant representable in scalar type")
}

/// Lossy conversion back to `f64` for reporting and serialization.
#[inline]
pub fn to_f64<S: Scalar>(x: S) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}
