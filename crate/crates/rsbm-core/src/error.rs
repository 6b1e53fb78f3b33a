//! Error type shared across the library.

use thiserror::Error;

/// Library result type.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A time argument fell outside the interval an operation is defined on.
    #[error("time {t} outside valid interval [{lo}, {hi})")]
    TimeOutOfDomain { t: f64, lo: f64, hi: f64 },

    /// Evaluation at or past the upper bridge endpoint, where the
    /// log-derivative of the bridge standard deviation is singular.
    #[error("bridge pole: t = {t} has interpolation coefficient too close to 1")]
    Pole { t: f64 },

    /// Two trajectories that must share a shape do not.
    #[error("trajectory shape mismatch: {left} vs {right} waypoints")]
    ShapeMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Training loss became non-finite.
    #[error("training diverged at step {step} (epoch {epoch}): loss = {loss}")]
    Diverged { step: usize, epoch: usize, loss: f64 },

    /// ODE state became non-finite mid-integration.
    #[error("non-finite integration state at step {step}")]
    NonFiniteState { step: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
