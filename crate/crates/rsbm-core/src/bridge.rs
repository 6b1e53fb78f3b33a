//! Closed-form math of the ε-rectified bridge family.
//!
//! The bridge between a data trajectory `a_0` and a terminal trajectory `a_T`
//! is the Gaussian kernel
//!
//! ```text
//! q_ε(a_t | a_0, a_T) = N(μ_t, σ²_{ε,t} I),
//! μ_t      = s_t a_T + (1 − s_t) a_0,     s_t = t² / σ_max²,
//! σ²_{ε,t} = ε t² (1 − s_t),              ε ∈ (0, 1].
//! ```
//!
//! Both endpoints are pinned exactly: `σ_{ε,0} = σ_{ε,σ_max} = 0` for every
//! admissible `ε`. The probability-flow velocity consistent with these
//! marginals is
//!
//! ```text
//! v*(a_t) = dμ_t/dt + dlogσ_{ε,t}/dt · (a_t − μ_t),
//! dμ_t/dt        = (2t/σ_max²) (a_T − a_0),
//! dlogσ_{ε,t}/dt = (1 − 2s_t) / (t (1 − s_t)),
//! ```
//!
//! where the log-derivative is independent of `ε` — the √ε factor cancels in
//! the ratio (dσ/dt)/σ — so one velocity parameterization serves the whole
//! family. The per-component conditional variance of `v*` is
//! `ε (1 − 2s_t)² / (1 − s_t)`, linear in `ε`.
//!
//! All operations are pure functions; random sources are passed in
//! explicitly, and every draw is recorded in the returned [`BridgeSample`] so
//! downstream quantities stay deterministic functions of the sample.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{as_f64, lit, Real};

/// Fraction of `σ_max` excluded at the top of the training/evaluation
/// interval. The log-derivative of the bridge deviation has a pole at
/// `s_t = 1`; clamping to `(1 − δ) σ_max` keeps every evaluated time strictly
/// inside the domain and bounds the velocity gain `|dlogσ/dt| ≲ 1/(2δσ_max)`
/// a trained network can pick up near the terminal end. Few-step samplers
/// take first steps of size ~σ_max, so gains learned above this clamp get
/// amplified off the training support and destabilize generation.
pub const UPPER_CLAMP_DELTA: f64 = 0.02;

/// The (σ_max, σ_min, ε) triple governing one bridge family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig<R: Real = f64> {
    /// Time-horizon scale; the bridge lives on `t ∈ [0, σ_max]`.
    pub sigma_max: R,
    /// Lower time clamp for training and velocity evaluation.
    pub sigma_min: R,
    /// Rectification strength in `(0, 1]`; 1 is the Brownian bridge.
    pub epsilon: R,
}

impl<R: Real> BridgeConfig<R> {
    pub fn new(sigma_max: R, sigma_min: R, epsilon: R) -> Result<Self> {
        if !(sigma_min > R::zero() && sigma_min < sigma_max) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < sigma_min < sigma_max, got sigma_min={}, sigma_max={}",
                sigma_min, sigma_max
            )));
        }
        if !(epsilon > R::zero() && epsilon <= R::one()) {
            return Err(Error::InvalidConfig(format!(
                "need epsilon in (0, 1], got {}",
                epsilon
            )));
        }
        Ok(Self {
            sigma_max,
            sigma_min,
            epsilon,
        })
    }

    /// Same horizon and clamp, different rectification strength.
    pub fn with_epsilon(&self, epsilon: R) -> Result<Self> {
        Self::new(self.sigma_max, self.sigma_min, epsilon)
    }

    /// Upper end of the valid training/evaluation interval,
    /// `(1 − δ) σ_max`.
    pub fn t_max(&self) -> R {
        (R::one() - lit::<R>(UPPER_CLAMP_DELTA)) * self.sigma_max
    }
}

impl<R: Real> Default for BridgeConfig<R> {
    fn default() -> Self {
        Self {
            sigma_max: lit(10.0),
            sigma_min: lit(0.002),
            epsilon: lit(0.5),
        }
    }
}

/// An `H × 2` waypoint array stored flat in waypoint-major order
/// `(x_0, y_0, x_1, y_1, …)`. The flattening order is shared by the bridge
/// math, the model I/O, and the metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<R: Real = f64> {
    values: Vec<R>,
    horizon: usize,
}

impl<R: Real> Trajectory<R> {
    /// Builds from a flat waypoint-major vector of length `2H`.
    pub fn from_flat(values: Vec<R>) -> Result<Self> {
        if !values.len().is_multiple_of(2) || values.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "flat trajectory length must be a positive multiple of 2, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory"));
        }
        let horizon = values.len() / 2;
        Ok(Self { values, horizon })
    }

    pub fn from_waypoints(waypoints: &[[R; 2]]) -> Result<Self> {
        let mut values = Vec::with_capacity(waypoints.len() * 2);
        for w in waypoints {
            values.push(w[0]);
            values.push(w[1]);
        }
        Self::from_flat(values)
    }

    pub fn zeros(horizon: usize) -> Self {
        Self {
            values: vec![R::zero(); horizon * 2],
            horizon,
        }
    }

    /// All-components-constant trajectory, handy in tests and oracles.
    pub fn constant(horizon: usize, value: R) -> Self {
        Self {
            values: vec![value; horizon * 2],
            horizon,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Flattened dimension `D = 2H`.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn flat(&self) -> &[R] {
        &self.values
    }

    pub fn waypoint(&self, i: usize) -> [R; 2] {
        [self.values[2 * i], self.values[2 * i + 1]]
    }

    pub fn last_waypoint(&self) -> [R; 2] {
        self.waypoint(self.horizon - 1)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Component-wise map.
    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            horizon: self.horizon,
        }
    }

    /// Component-wise combination of two same-shape trajectories.
    pub fn zip_with(&self, other: &Self, f: impl Fn(R, R) -> R) -> Result<Self> {
        self.check_shape(other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            horizon: self.horizon,
        })
    }

    pub fn check_shape(&self, other: &Self) -> Result<()> {
        if self.horizon != other.horizon {
            return Err(Error::ShapeMismatch {
                left: self.horizon,
                right: other.horizon,
            });
        }
        Ok(())
    }

    /// ℓ∞ distance; shapes must match.
    pub fn linf_distance(&self, other: &Self) -> Result<R> {
        self.check_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(R::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    /// Euclidean norm of the flattened vector.
    pub fn l2_norm(&self) -> R {
        self.values
            .iter()
            .fold(R::zero(), |s, &v| s + v * v)
            .sqrt()
    }
}

/// One draw from the bridge kernel with every intermediate recorded, so that
/// `a_t = μ_t + σ_t · noise` holds exactly and the analytic target velocity
/// is a pure function of the sample.
#[derive(Debug, Clone)]
pub struct BridgeSample<R: Real = f64> {
    pub a_t: Trajectory<R>,
    pub t: R,
    /// The standard-normal draws used, one per flattened component.
    pub noise: Vec<R>,
    pub mu_t: Trajectory<R>,
    pub sigma_t: R,
}

fn check_time_in<R: Real>(t: R, lo: R, hi: R) -> Result<()> {
    if t < lo || t > hi {
        return Err(Error::TimeOutOfDomain {
            t: as_f64(t),
            lo: as_f64(lo),
            hi: as_f64(hi),
        });
    }
    Ok(())
}

/// Interpolation coefficient `s_t = t²/σ_max²`, in `[0, 1]` for
/// `t ∈ [0, σ_max]`.
pub fn interp_coeff<R: Real>(t: R, cfg: &BridgeConfig<R>) -> Result<R> {
    check_time_in(t, R::zero(), cfg.sigma_max)?;
    Ok((t * t) / (cfg.sigma_max * cfg.sigma_max))
}

/// Bridge mean `μ_t = s_t a_T + (1 − s_t) a_0`.
pub fn bridge_mean<R: Real>(
    a0: &Trajectory<R>,
    a_terminal: &Trajectory<R>,
    t: R,
    cfg: &BridgeConfig<R>,
) -> Result<Trajectory<R>> {
    let s = interp_coeff(t, cfg)?;
    a0.zip_with(a_terminal, |x0, x1| s * x1 + (R::one() - s) * x0)
}

/// Bridge standard deviation `σ_{ε,t} = sqrt(ε t² (1 − s_t))`.
///
/// Exactly zero at both endpoints: `s_0 = 0` makes the `t²` factor vanish and
/// `s_{σ_max} = 1` makes `1 − s_t` vanish, for every `ε`.
pub fn bridge_std<R: Real>(t: R, cfg: &BridgeConfig<R>) -> Result<R> {
    let s = interp_coeff(t, cfg)?;
    Ok((cfg.epsilon * t * t * (R::one() - s)).sqrt())
}

/// Assembles a bridge sample from externally supplied standard-normal draws.
///
/// This is the deterministic core of [`sample_bridge`]; oracles and tests use
/// it to force specific noise realizations.
pub fn sample_bridge_with_noise<R: Real>(
    a0: &Trajectory<R>,
    a_terminal: &Trajectory<R>,
    t: R,
    cfg: &BridgeConfig<R>,
    noise: Vec<R>,
) -> Result<BridgeSample<R>> {
    check_time_in(t, cfg.sigma_min, cfg.sigma_max)?;
    if t == cfg.sigma_max {
        return Err(Error::TimeOutOfDomain {
            t: as_f64(t),
            lo: as_f64(cfg.sigma_min),
            hi: as_f64(cfg.sigma_max),
        });
    }
    let mu_t = bridge_mean(a0, a_terminal, t, cfg)?;
    if noise.len() != mu_t.dim() {
        return Err(Error::ShapeMismatch {
            left: noise.len() / 2,
            right: mu_t.horizon(),
        });
    }
    let sigma_t = bridge_std(t, cfg)?;
    let values: Vec<R> = mu_t
        .flat()
        .iter()
        .zip(&noise)
        .map(|(&m, &z)| m + sigma_t * z)
        .collect();
    let a_t = Trajectory::from_flat(values)?;
    Ok(BridgeSample {
        a_t,
        t,
        noise,
        mu_t,
        sigma_t,
    })
}

/// Draws `a_t ~ q_ε(· | a_0, a_T)` via the reparameterization
/// `a_t = μ_t + σ_{ε,t} z`, `z ~ N(0, I)`, for `t ∈ [σ_min, σ_max)`.
pub fn sample_bridge<R: Real, G: Rng + ?Sized>(
    a0: &Trajectory<R>,
    a_terminal: &Trajectory<R>,
    t: R,
    cfg: &BridgeConfig<R>,
    rng: &mut G,
) -> Result<BridgeSample<R>>
where
    StandardNormal: Distribution<R>,
{
    let noise: Vec<R> = (0..a0.dim()).map(|_| StandardNormal.sample(rng)).collect();
    sample_bridge_with_noise(a0, a_terminal, t, cfg, noise)
}

/// Mean derivative `dμ_t/dt = (2t/σ_max²) (a_T − a_0)`.
pub fn dmu_dt<R: Real>(
    a0: &Trajectory<R>,
    a_terminal: &Trajectory<R>,
    t: R,
    cfg: &BridgeConfig<R>,
) -> Result<Trajectory<R>> {
    check_time_in(t, R::zero(), cfg.sigma_max)?;
    let coeff = lit::<R>(2.0) * t / (cfg.sigma_max * cfg.sigma_max);
    a0.zip_with(a_terminal, |x0, x1| coeff * (x1 - x0))
}

/// Log-derivative of the bridge deviation,
/// `dlogσ_{ε,t}/dt = (1 − 2s_t) / (t (1 − s_t))`.
///
/// Independent of `ε`: the √ε factor common to `dσ/dt` and `σ` cancels.
/// Defined on `[σ_min, σ_max)`; the upper endpoint is a pole.
pub fn dlog_sigma_dt<R: Real>(t: R, cfg: &BridgeConfig<R>) -> Result<R> {
    if t < cfg.sigma_min {
        return Err(Error::TimeOutOfDomain {
            t: as_f64(t),
            lo: as_f64(cfg.sigma_min),
            hi: as_f64(cfg.sigma_max),
        });
    }
    let s = if t >= cfg.sigma_max {
        R::one()
    } else {
        interp_coeff(t, cfg)?
    };
    if R::one() - s <= R::zero() {
        return Err(Error::Pole { t: as_f64(t) });
    }
    Ok((R::one() - lit::<R>(2.0) * s) / (t * (R::one() - s)))
}

/// Analytic target velocity
/// `v* = dμ_t/dt + dlogσ_{ε,t}/dt · (a_t − μ_t)`,
/// evaluated at a recorded bridge sample.
pub fn target_velocity<R: Real>(
    sample: &BridgeSample<R>,
    a0: &Trajectory<R>,
    a_terminal: &Trajectory<R>,
    cfg: &BridgeConfig<R>,
) -> Result<Trajectory<R>> {
    let drift = dmu_dt(a0, a_terminal, sample.t, cfg)?;
    let dlog = dlog_sigma_dt(sample.t, cfg)?;
    let deviation = sample.a_t.zip_with(&sample.mu_t, |a, m| a - m)?;
    drift.zip_with(&deviation, |d, e| d + dlog * e)
}

/// Per-component conditional variance of the target velocity,
/// `ε (1 − 2s_t)² / (1 − s_t)`.
///
/// Vanishes at `s_t = 1/2`, tends to `ε` as `s_t → 0`, and scales linearly in
/// `ε` everywhere.
pub fn velocity_variance<R: Real>(t: R, cfg: &BridgeConfig<R>) -> Result<R> {
    if t < cfg.sigma_min {
        return Err(Error::TimeOutOfDomain {
            t: as_f64(t),
            lo: as_f64(cfg.sigma_min),
            hi: as_f64(cfg.sigma_max),
        });
    }
    let s = if t >= cfg.sigma_max {
        R::one()
    } else {
        interp_coeff(t, cfg)?
    };
    if R::one() - s <= R::zero() {
        return Err(Error::Pole { t: as_f64(t) });
    }
    let num = R::one() - lit::<R>(2.0) * s;
    // ε multiplies last so the ε-linearity ratio is exact in floating point
    Ok(cfg.epsilon * (num * num / (R::one() - s)))
}

/// Information cost of rectification:
/// `KL(q_ε ‖ q_1) = (D/2) (ε − 1 − ln ε)` nats for a `D`-dimensional kernel.
///
/// Zero at `ε = 1` and monotonically increasing as `ε → 0`.
pub fn kl_rectified<R: Real>(epsilon: R, dim: usize) -> Result<R> {
    if epsilon <= R::zero() {
        return Err(Error::InvalidConfig(format!(
            "kl_rectified needs epsilon > 0, got {}",
            epsilon
        )));
    }
    let half_d = lit::<R>(dim as f64 / 2.0);
    Ok(half_d * (epsilon - R::one() - epsilon.ln()))
}
