//! Scalar abstraction over `f32`/`f64`.
//!
//! Production code runs in `f32`; gradient verification instantiates the
//! same code in `f64` so finite differences are not drowned by rounding.

use num_traits::Float;

/// Floating-point scalar the numeric pipeline is generic over.
pub trait Real: Float + std::fmt::Debug + std::fmt::Display + Default + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self
    }
}
