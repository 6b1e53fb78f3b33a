//! Rectified Schrödinger bridge matching for conditional trajectory generation.
//!
//! The library is organized around a family of Gaussian bridge kernels between
//! a data trajectory `a_0` and a terminal prior trajectory `a_T`, indexed by a
//! rectification strength `ε ∈ (0, 1]`:
//!
//! ```text
//! q_ε(a_t | a_0, a_T) = N(μ_t, σ²_{ε,t} I)
//! μ_t      = s_t a_T + (1 − s_t) a_0,    s_t = t²/σ_max²
//! σ²_{ε,t} = ε t² (1 − s_t)
//! ```
//!
//! `ε = 1` is the Brownian bridge; `ε → 0` collapses onto the deterministic
//! displacement interpolant. The conditional velocity field driving the
//! probability-flow ODE keeps the same functional form for every `ε`, which is
//! what makes a single network parameterization serve the whole family.
//!
//! Modules:
//! - [`bridge`] — closed-form kernel math: interpolation coefficient, mean,
//!   standard deviation, sampling, analytic target velocity, velocity
//!   variance, and the rectification KL cost.
//! - [`schedule`] — Karras inference schedule and the uniform training-time
//!   sampler.
//! - [`model`] — a small FiLM-conditioned MLP velocity field with hand-rolled
//!   reverse-mode gradients, AdamW updates, and the three prediction-target
//!   parameterizations (`v`, `x0`, `eps`).
//! - [`prior`] — terminal-condition generators: isotropic Gaussian, perturbed
//!   ground truth, and a small learned conditional VAE prior.
//! - [`sampler`] — few-step Heun/Euler probability-flow integration with
//!   exact NFE accounting.
//! - [`data`] — synthetic 2D trajectory families (star patrol, figure-8) and
//!   CSV persistence.
//! - [`metrics`] — open-loop evaluation metrics (MSE, cosine similarity, FDE).
//! - [`oracle`] — self-contained numerical verification of the closed-form
//!   results, with independently coded references.
//! - [`checkpoint`] — versioned `RSBM1` model/prior containers.
//!
//! Core math modules are generic over the scalar type through [`num::Real`];
//! the training stack and CLI pin `f64` (see the type aliases below).

pub mod bridge;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod num;
pub mod oracle;
pub mod prior;
pub mod sampler;
pub mod schedule;

pub use error::{Error, Result};
pub use num::Real;

/// Scalar type used by the training stack, the CLI, and all defaults.
pub type Scalar = f64;

/// `f64` bridge configuration, the form used everywhere outside generic math.
pub type BridgeConfig = bridge::BridgeConfig<Scalar>;
/// `f64` waypoint trajectory.
pub type Trajectory = bridge::Trajectory<Scalar>;
/// `f64` bridge sample.
pub type BridgeSample = bridge::BridgeSample<Scalar>;
/// `f64` timestep schedule.
pub type TimestepSchedule = schedule::TimestepSchedule<Scalar>;
/// `f64` sampler configuration.
pub type SamplerConfig = sampler::SamplerConfig<Scalar>;
