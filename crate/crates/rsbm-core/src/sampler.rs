//! Few-step probability-flow integration from `a_T` back to `â_0`.
//!
//! Both solvers walk a strictly decreasing schedule `t_0 > … > t_k = 0` with
//! signed steps `Δt = t_{i+1} − t_i < 0` and never evaluate the field at
//! `t = 0`, where the bridge velocity is singular:
//!
//! - Heun: predictor `ã = a + d₁Δt` with `d₁ = v(a, t_i)`, corrector with
//!   `d₂ = v(ã, t_{i+1})`. The final sub-interval (to `t = 0`) takes a single
//!   `d₁` slope at the last nonzero node and applies it as a plain Euler
//!   update without a corrector evaluation, giving exactly `2k − 1` field
//!   evaluations for `k` steps.
//! - Euler: one slope per step at the left node, `k` evaluations.
//!
//! Integration of one trajectory is strictly sequential; independent
//! trajectories can run in parallel, each returning its own evaluation count.

use std::fmt;

use crate::bridge::{self, BridgeConfig, Trajectory};
use crate::error::{Error, Result};
use crate::num::{lit, Real};
use crate::schedule::TimestepSchedule;

/// A conditional velocity field with its conditioning already bound.
pub trait VelocityField<R: Real> {
    fn velocity(&self, state: &Trajectory<R>, t: R) -> Result<Trajectory<R>>;
}

impl<R: Real, F> VelocityField<R> for F
where
    F: Fn(&Trajectory<R>, R) -> Result<Trajectory<R>>,
{
    fn velocity(&self, state: &Trajectory<R>, t: R) -> Result<Trajectory<R>> {
        self(state, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Heun,
    Euler,
}

impl Solver {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "heun" => Ok(Self::Heun),
            "euler" => Ok(Self::Euler),
            other => Err(Error::InvalidConfig(format!("unknown solver '{other}'"))),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Heun => write!(f, "heun"),
            Self::Euler => write!(f, "euler"),
        }
    }
}

/// Solver choice plus the schedule it walks.
#[derive(Debug, Clone)]
pub struct SamplerConfig<R: Real = f64> {
    pub solver: Solver,
    pub schedule: TimestepSchedule<R>,
}

impl<R: Real> SamplerConfig<R> {
    pub fn new(solver: Solver, schedule: TimestepSchedule<R>) -> Self {
        Self { solver, schedule }
    }

    pub fn k(&self) -> usize {
        self.schedule.num_steps()
    }
}

/// Result of one integration: the reconstructed data endpoint and the exact
/// number of field evaluations spent.
#[derive(Debug, Clone)]
pub struct Integration<R: Real = f64> {
    pub a0_hat: Trajectory<R>,
    pub nfe: usize,
}

/// Field evaluations for `k` steps: `2k − 1` for Heun, `k` for Euler.
pub fn nfe_of(solver: Solver, k: usize) -> usize {
    match solver {
        Solver::Heun => 2 * k - 1,
        Solver::Euler => k,
    }
}

fn check_finite<R: Real>(state: &Trajectory<R>, step: usize) -> Result<()> {
    if !state.is_finite() {
        return Err(Error::NonFiniteState { step });
    }
    Ok(())
}

/// Runs the configured solver from the terminal state down the schedule.
pub fn integrate<R: Real>(
    field: &dyn VelocityField<R>,
    a_terminal: &Trajectory<R>,
    cfg: &SamplerConfig<R>,
) -> Result<Integration<R>> {
    match cfg.solver {
        Solver::Heun => heun_integrate(field, a_terminal, &cfg.schedule),
        Solver::Euler => euler_integrate(field, a_terminal, &cfg.schedule),
    }
}

/// Second-order Heun walk; `2k − 1` evaluations (the final sub-interval takes
/// its single slope at the last nonzero node and skips the corrector).
pub fn heun_integrate<R: Real>(
    field: &dyn VelocityField<R>,
    a_terminal: &Trajectory<R>,
    schedule: &TimestepSchedule<R>,
) -> Result<Integration<R>> {
    let steps = schedule.steps();
    let mut state = a_terminal.clone();
    let mut nfe = 0usize;
    let half = lit::<R>(0.5);
    for i in 0..steps.len() - 1 {
        let t_cur = steps[i];
        let t_next = steps[i + 1];
        let dt = t_next - t_cur; // signed, negative
        let d1 = field.velocity(&state, t_cur)?;
        nfe += 1;
        let predictor = state.zip_with(&d1, |a, d| a + d * dt)?;
        state = if t_next > R::zero() {
            let d2 = field.velocity(&predictor, t_next)?;
            nfe += 1;
            state.zip_with(&d1.zip_with(&d2, |x, y| x + y)?, |a, sum| {
                a + half * sum * dt
            })?
        } else {
            predictor
        };
        check_finite(&state, i)?;
    }
    Ok(Integration { a0_hat: state, nfe })
}

/// First-order Euler walk; `k` evaluations, all at left nodes.
pub fn euler_integrate<R: Real>(
    field: &dyn VelocityField<R>,
    a_terminal: &Trajectory<R>,
    schedule: &TimestepSchedule<R>,
) -> Result<Integration<R>> {
    let steps = schedule.steps();
    let mut state = a_terminal.clone();
    let mut nfe = 0usize;
    for i in 0..steps.len() - 1 {
        let dt = steps[i + 1] - steps[i];
        let d = field.velocity(&state, steps[i])?;
        nfe += 1;
        state = state.zip_with(&d, |a, v| a + v * dt)?;
        check_finite(&state, i)?;
    }
    Ok(Integration { a0_hat: state, nfe })
}

/// The analytic conditional field for known endpoints,
/// `v(a, t) = dμ_t/dt + dlogσ_t/dt (a − μ_t)`.
///
/// Flowing it backward from any terminal state contracts onto `a_0`, which
/// makes it the reference problem for solver-order measurements.
#[derive(Debug, Clone)]
pub struct AnalyticBridgeField<R: Real = f64> {
    pub a0: Trajectory<R>,
    pub a_terminal: Trajectory<R>,
    pub cfg: BridgeConfig<R>,
}

impl<R: Real> VelocityField<R> for AnalyticBridgeField<R> {
    /// `dμ_t/dt + dlogσ_t/dt (a − μ_t)`, evaluated in the algebraically
    /// equivalent form `(a_T − a_0)/t + dlogσ_t/dt (a − a_T)`, whose pole
    /// term vanishes identically at the terminal pin where the sampler takes
    /// its first slope (`t = σ_max`, state exactly `a_T`).
    fn velocity(&self, state: &Trajectory<R>, t: R) -> Result<Trajectory<R>> {
        let transport = self.a_terminal.zip_with(&self.a0, |at, a0| (at - a0) / t)?;
        let s = bridge::interp_coeff(t, &self.cfg)?;
        if R::one() - s < lit::<R>(1e-9) {
            if state.linf_distance(&self.a_terminal)? > R::zero() {
                return Err(crate::error::Error::Pole {
                    t: crate::num::as_f64(t),
                });
            }
            return Ok(transport);
        }
        let dlog = bridge::dlog_sigma_dt(t, &self.cfg)?;
        let deviation = state.zip_with(&self.a_terminal, |a, at| a - at)?;
        transport.zip_with(&deviation, |d, e| d + dlog * e)
    }
}

impl<R: Real> AnalyticBridgeField<R> {
    /// Closed-form flow state at time `t` for the solution through
    /// `(start, t_start)`: the interpolant plus the initial deviation scaled
    /// by `σ(t)/σ(t_start)`. This is the reference that solver-order
    /// measurements compare against.
    pub fn exact_state(
        &self,
        start: &Trajectory<R>,
        t_start: R,
        t: R,
    ) -> Result<Trajectory<R>> {
        let mu_start = bridge::bridge_mean(&self.a0, &self.a_terminal, t_start, &self.cfg)?;
        let mu_t = bridge::bridge_mean(&self.a0, &self.a_terminal, t, &self.cfg)?;
        let ratio = bridge::bridge_std(t, &self.cfg)? / bridge::bridge_std(t_start, &self.cfg)?;
        let deviation = start.zip_with(&mu_start, |a, m| a - m)?;
        mu_t.zip_with(&deviation, |m, e| m + ratio * e)
    }
}

/// A trained model bound to one generation episode: fixed context and the
/// terminal draw the integration starts from (needed by the `x0`/`eps`
/// target conversions).
pub struct ModelField<'a> {
    pub model: &'a crate::model::VelocityModel,
    pub context: &'a crate::model::ContextVector,
    pub a_terminal: &'a Trajectory<f64>,
}

impl VelocityField<f64> for ModelField<'_> {
    fn velocity(&self, state: &Trajectory<f64>, t: f64) -> Result<Trajectory<f64>> {
        let head = self.model.forward(state, t, self.context)?;
        crate::model::to_velocity(
            &head,
            state,
            self.a_terminal,
            t,
            self.model.bridge(),
            self.model.target(),
        )
    }
}

/// Least-squares slope of `ln error` against `ln k` — the measured order of
/// convergence for a list of `(k, error)` pairs.
pub fn convergence_slope<R: Real>(points: &[(usize, R)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(k, e)| ((k as f64).ln(), crate::num::as_f64(e).ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    // error ∝ k^{-slope}; report the positive order
    -((n * sxy - sx * sy) / (n * sxx - sx * sx))
}
