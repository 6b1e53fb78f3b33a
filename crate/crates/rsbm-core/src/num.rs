//! Scalar abstraction for the closed-form math.

/// Floating-point scalar: `f32` or `f64`.
///
/// Everything in [`crate::bridge`], [`crate::schedule`], [`crate::sampler`],
/// and [`crate::metrics`] is written against this trait. Training and the CLI
/// use `f64` (variance ratios near the bridge pole lose precision in 32-bit).
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for lifting an `f64` constant into a generic scalar.
pub(crate) fn lit<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("finite f64 literal converts to any Real")
}

/// Lossy view of a generic scalar as `f64`, for error messages and reports.
pub(crate) fn as_f64<R: Real>(x: R) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
