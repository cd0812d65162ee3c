//! Scalar abstraction so the core math runs on `f32` or `f64`.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the library: `f32` or `f64`.
///
/// `RealField` brings the elementary functions and constants, the
/// num-traits bounds bring literal conversion.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default {}

impl<T> Real for T where T: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default {}

/// Shorthand for embedding an `f64` literal into a generic scalar.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal conversion")
}
