//! Timestep machinery: the Karras inference schedule and the uniform
//! training-time sampler.
//!
//! A schedule for `k` integration steps holds `k + 1` strictly decreasing
//! nodes `t_0 > t_1 > … > t_k`. The first `k` nodes follow the power-law
//! (ρ-warped) Karras spacing from `t_max = (1 − δ) σ_max` down to `σ_min`,
//! and the terminal node is exactly 0 so the last step integrates all the way
//! to the data endpoint. The velocity field is only ever *evaluated* at
//! nodes `≥ σ_min`; the final sub-interval to 0 is handled by the sampler
//! without touching the pole at `t = 0`.

use rand::Rng;
use rand_distr::{Distribution, StandardUniform};

use crate::bridge::BridgeConfig;
use crate::error::{Error, Result};
use crate::num::{as_f64, lit, Real};

/// Default warp exponent; larger values concentrate nodes near `σ_min`.
pub const DEFAULT_RHO: f64 = 7.0;

/// Strictly decreasing integration nodes `t_0 > … > t_k`, with `t_k = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepSchedule<R: Real = f64> {
    steps: Vec<R>,
    rho: R,
}

impl<R: Real> TimestepSchedule<R> {
    /// Validates monotonicity and the terminal node.
    pub fn new(steps: Vec<R>, rho: R) -> Result<Self> {
        if steps.len() < 2 {
            return Err(Error::InvalidConfig(
                "schedule needs at least two nodes".into(),
            ));
        }
        if !steps.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig(
                "schedule nodes must be strictly decreasing".into(),
            ));
        }
        if *steps.last().unwrap() < R::zero() {
            return Err(Error::InvalidConfig(format!(
                "terminal node must be >= 0, got {}",
                as_f64(*steps.last().unwrap())
            )));
        }
        Ok(Self { steps, rho })
    }

    pub fn steps(&self) -> &[R] {
        &self.steps
    }

    /// Number of integration steps (= nodes − 1).
    pub fn num_steps(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn rho(&self) -> R {
        self.rho
    }
}

/// Karras schedule for `k ≥ 1` integration steps.
///
/// Nodes 0..k−1 interpolate `σ_max^{1/ρ} → σ_min^{1/ρ}` uniformly and are
/// raised back to the ρ-th power; node `k` is 0. The two anchors are assigned
/// exactly (no round-trip through the power map), so `steps[0] = σ_max` and
/// `steps[k−1] = σ_min` hold bit-exactly. At ρ = 1 the interior spacing is
/// uniform between `σ_max` and `σ_min`.
///
/// The first node sits at `σ_max` itself, not at the training clamp: the
/// bridge pins there (`σ_{ε,σ_max} = 0`), the initial state is exactly the
/// terminal marginal, and the velocity has a finite zero-deviation limit. A
/// first node inside the clamp would instead be evaluated where the field's
/// state-gain `dlogσ/dt` is large, and a few-step solver amplifies that gain
/// over its long first stride.
pub fn karras_schedule<R: Real>(
    k: usize,
    cfg: &BridgeConfig<R>,
    rho: R,
) -> Result<TimestepSchedule<R>> {
    if k == 0 {
        return Err(Error::InvalidConfig(
            "schedule needs at least one step".into(),
        ));
    }
    if rho <= R::zero() {
        return Err(Error::InvalidConfig(format!(
            "rho must be positive, got {}",
            as_f64(rho)
        )));
    }
    let t_max = cfg.sigma_max;
    let t_min = cfg.sigma_min;
    let mut steps = Vec::with_capacity(k + 1);
    if k == 1 {
        steps.push(t_max);
    } else {
        let inv_rho = R::one() / rho;
        let hi = t_max.powf(inv_rho);
        let lo = t_min.powf(inv_rho);
        for i in 0..k {
            if i == 0 {
                steps.push(t_max);
            } else if i == k - 1 {
                steps.push(t_min);
            } else {
                let frac = lit::<R>(i as f64) / lit::<R>((k - 1) as f64);
                steps.push((hi + frac * (lo - hi)).powf(rho));
            }
        }
    }
    steps.push(R::zero());
    TimestepSchedule::new(steps, rho)
}

/// Uniform training-time draw on `[σ_min, (1 − δ) σ_max]`.
///
/// The upper end is clamped below `σ_max` so the analytic velocity target is
/// always finite (the log-derivative of the bridge deviation has a pole at
/// the endpoint).
pub fn sample_training_time<R: Real, G: Rng + ?Sized>(rng: &mut G, cfg: &BridgeConfig<R>) -> R
where
    StandardUniform: Distribution<R>,
{
    let u: R = StandardUniform.sample(rng);
    cfg.sigma_min + u * (cfg.t_max() - cfg.sigma_min)
}
