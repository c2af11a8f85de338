//! The scalar comparison equation
//! `ḣ = γ(t)h + α(t)h^p(t−τ) + β(t)`, `h = w` on `[−τ, 0]`,
//! and the closed-form envelopes built on it.

use std::fmt;

use crate::error::{invalid, Error, Result, SolveError};
use crate::integrals::{BoundContext, EnvelopeValue};
use crate::model::{BoundData, ScalarFn};
use crate::quadrature::QuadratureSettings;
use crate::steps::{self, DelayRhs, Dense, SolveStats, StepControl};

/// Dense solution of the comparison equation.
#[derive(Clone)]
pub struct ScalarTrajectory {
    tau: f64,
    history: ScalarFn,
    dense: Dense,
    breakpoints: Vec<f64>,
    blow_up: bool,
    clamp_count: usize,
    stats: SolveStats,
}

impl fmt::Debug for ScalarTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarTrajectory")
            .field("end_time", &self.end_time())
            .field("mesh_points", &self.dense.t.len())
            .field("blow_up", &self.blow_up)
            .field("clamp_count", &self.clamp_count)
            .finish()
    }
}

impl ScalarTrajectory {
    /// Last computed time. Equals the horizon unless the solution blew up or
    /// the step size underflowed; on blow-up this is `T̃`.
    pub fn end_time(&self) -> f64 {
        self.dense.end()
    }

    pub fn blow_up(&self) -> bool {
        self.blow_up
    }

    /// `T̃` when the solution escaped the overflow threshold.
    pub fn blow_up_time(&self) -> Option<f64> {
        self.blow_up.then(|| self.end_time())
    }

    /// Number of accepted steps whose end value was clamped from below to 0.
    pub fn clamp_count(&self) -> usize {
        self.clamp_count
    }

    pub fn stats(&self) -> SolveStats {
        self.stats
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Accepted mesh, starting at 0.
    pub fn mesh(&self) -> &[f64] {
        &self.dense.t
    }

    /// Every multiple of `τ` reached, plus the horizon.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn check(&self, t: f64) -> Result<()> {
        if t < -self.tau || t > self.end_time() || t.is_nan() {
            return Err(Error::Domain(format!(
                "t = {t} outside the computed interval [{}, {}]",
                -self.tau,
                self.end_time()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        if t < 0.0 {
            return Ok(self.history.eval(t));
        }
        let mut out = [0.0];
        self.dense.eval_into(t, &mut out);
        Ok(out[0])
    }

    /// Derivative of the dense interpolant (right derivative at mesh points).
    pub fn derivative(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        if t < 0.0 {
            return Err(Error::Domain("derivative is only available for t >= 0".into()));
        }
        let mut out = [0.0];
        self.dense.derivative_into(t, &mut out);
        Ok(out[0])
    }

    pub fn sample(&self, grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter().map(|&t| self.eval(t)).collect()
    }
}

struct ComparisonRhs<'a> {
    bd: &'a BoundData,
    extra: f64,
}

impl DelayRhs for ComparisonRhs<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn history(&self, t: f64, out: &mut [f64]) {
        out[0] = self.bd.w.eval(t);
    }

    fn eval(&self, t: f64, y: &[f64], delayed: &[f64], out: &mut [f64]) {
        let bd = self.bd;
        let a = bd.alpha.eval(t);
        let push = if a == 0.0 { 0.0 } else { a * delayed[0].max(0.0).powf(bd.p) };
        out[0] = bd.gamma.eval(t) * y[0] + push + bd.beta.eval(t) + self.extra;
    }
}

fn solve_with(bd: &BoundData, horizon: f64, ctrl: &StepControl, extra: f64) -> Result<ScalarTrajectory> {
    ctrl.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(invalid(format!("horizon must be positive and finite, got {horizon}")));
    }
    let w0 = bd.w.eval(0.0);
    if !(w0 >= 0.0) || !w0.is_finite() {
        return Err(invalid(format!("history norm w(0) = {w0} must be finite and nonnegative")));
    }
    let rhs = ComparisonRhs { bd, extra };
    let o = steps::run(&rhs, bd.tau, horizon, ctrl, true);
    let traj = ScalarTrajectory {
        tau: bd.tau,
        history: bd.w.clone(),
        dense: o.dense,
        breakpoints: o.breakpoints,
        blow_up: o.blow_up,
        clamp_count: o.clamp_count,
        stats: o.stats,
    };
    match o.underflow_at {
        Some(t) => Err(SolveError::ScalarUnderflow {
            t,
            partial: Box::new(traj),
        }
        .into()),
        None => Ok(traj),
    }
}

/// Solves the comparison equation on `[0, horizon]` by the method of steps.
pub fn solve_comparison(bd: &BoundData, horizon: f64, ctrl: &StepControl) -> Result<ScalarTrajectory> {
    solve_with(bd, horizon, ctrl, 0.0)
}

/// Same equation with `β` replaced by `β + 1/n`.
pub fn solve_comparison_perturbed(
    bd: &BoundData,
    n: u64,
    horizon: f64,
    ctrl: &StepControl,
) -> Result<ScalarTrajectory> {
    if n == 0 {
        return Err(invalid("perturbation index n must be at least 1"));
    }
    solve_with(bd, horizon, ctrl, 1.0 / n as f64)
}

/// Right side of the Lemma-1 estimate at `t ≥ τ`.
pub fn envelope_lemma1(
    t: f64,
    h_tau: f64,
    omega: f64,
    bd: &BoundData,
    settings: &QuadratureSettings,
) -> Result<EnvelopeValue> {
    if t < bd.tau {
        return Err(Error::Domain(format!("envelope needs t >= tau, got t = {t}")));
    }
    if !(omega >= 0.0) || !(h_tau > 0.0) {
        return Err(invalid("envelope needs omega >= 0 and h_tau > 0"));
    }
    BoundContext::new(bd, t, *settings)?.envelope_lemma1(t, h_tau, omega)
}

/// `ζ(t) = [h(τ)ν(τ) + ∫_τ^t βν]/ν(t)`.
pub fn zeta(t: f64, h_at_tau: f64, bd: &BoundData, settings: &QuadratureSettings) -> Result<f64> {
    if !(h_at_tau > 0.0) {
        return Err(invalid(format!("zeta needs h(tau) > 0, got {h_at_tau}")));
    }
    BoundContext::new(bd, t, *settings)?.zeta(t, h_at_tau)
}

/// `q ζ(t)`
pub fn bound_theorem2(t: f64, q: f64, h_at_tau: f64, bd: &BoundData, settings: &QuadratureSettings) -> Result<f64> {
    if !(q > 1.0) {
        return Err(invalid(format!("q must exceed 1, got {q}")));
    }
    Ok(q * zeta(t, h_at_tau, bd, settings)?)
}
