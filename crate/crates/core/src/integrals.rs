//! The integral quantities behind every bound: `ν`, `σ`, `h_τ`, the kernel
//! integral, `ζ`, `ω` and running suprema of `∫γ`.
//!
//! Everything is written in terms of the running integral `Γ(t) = ∫₀ᵗ γ`:
//!
//! * `ν(t) = e^{−Γ(t)}`
//! * `σ(t) = e^{−(Γ(t) − Γ(t−τ))} = ν(t)/ν(t−τ)`
//! * kernel integrand `α σ^p / ν^{p−1} = α e^{pΓ(t−τ) − Γ(t)}`
//!
//! Working with exponents of `Γ` differences keeps intermediate values in
//! range when `ν` itself would over- or underflow.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BoundData, ScalarFn};
use crate::quadrature::{integrate, integrate_with, Integral, Primitive, QuadratureSettings};
use crate::tail::{GammaTail, TailModel};

/// Value of the Lemma-1 envelope at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum EnvelopeValue {
    Bound(f64),
    /// The bracketed denominator is no longer positive; the estimate says
    /// nothing from here on.
    Expired,
}

impl EnvelopeValue {
    pub fn bound(self) -> Option<f64> {
        match self {
            EnvelopeValue::Bound(x) => Some(x),
            EnvelopeValue::Expired => None,
        }
    }
}

/// Uniform grid on `[a, b]` with spacing at most `step`, both endpoints
/// included exactly.
pub fn uniform_grid(a: f64, b: f64, step: f64) -> Vec<f64> {
    if !(b > a) {
        return vec![a];
    }
    let count = (((b - a) / step) - 1e-9).ceil().max(1.0) as usize;
    (0..=count)
        .map(|k| if k == count { b } else { a + (b - a) * k as f64 / count as f64 })
        .collect()
}

/// Golden-section search for a maximum of `f` on `[a, b]`.
pub(crate) fn golden_max(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const R: f64 = 0.618_033_988_749_894_8;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid maximum of `f` refined by golden-section search in the bracket around
/// the grid argmax. Returns `(t*, f(t*), index of grid argmax)`.
pub(crate) fn refined_max(grid: &[f64], mut f: impl FnMut(f64) -> f64) -> (f64, f64, usize) {
    let values: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let mut k = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[k] {
            k = i;
        }
    }
    let mut best = (grid[k], values[k]);
    if grid.len() > 1 {
        let lo = grid[k.saturating_sub(1)];
        let hi = grid[(k + 1).min(grid.len() - 1)];
        let (t, v) = golden_max(&mut f, lo, hi);
        if v > best.1 {
            best = (t, v);
        }
    }
    (best.0, best.1, k)
}

/// Evaluation context for one [`BoundData`]: owns the cached running integral
/// of `γ` and the quadrature settings.
#[derive(Clone, Debug)]
pub struct BoundContext {
    bd: BoundData,
    settings: QuadratureSettings,
    gamma_int: Primitive,
}

impl BoundContext {
    /// Builds a context whose cache covers `[0, horizon]`; queries beyond it
    /// still work, only slower.
    pub fn new(bd: &BoundData, horizon: f64, settings: QuadratureSettings) -> Result<Self> {
        settings.validate()?;
        let upper = horizon.max(bd.tau);
        let step = (bd.tau / 8.0).min(upper / 64.0).max(1e-6 * upper);
        let gamma_int = Primitive::new(bd.gamma.clone(), upper, step, settings)?;
        Ok(BoundContext {
            bd: bd.clone(),
            settings,
            gamma_int,
        })
    }

    pub fn bounds(&self) -> &BoundData {
        &self.bd
    }

    pub fn settings(&self) -> &QuadratureSettings {
        &self.settings
    }

    pub fn tau(&self) -> f64 {
        self.bd.tau
    }

    pub fn p(&self) -> f64 {
        self.bd.p
    }

    /// `∫₀ᵗ γ`
    pub fn gamma_integral(&self, t: f64) -> Result<Integral> {
        self.gamma_int.integral(t)
    }

    pub(crate) fn primitive(&self) -> &Primitive {
        &self.gamma_int
    }

    pub(crate) fn big_gamma(&self, t: f64) -> f64 {
        self.gamma_int.value(t)
    }

    pub fn nu(&self, t: f64) -> Result<f64> {
        Ok((-self.gamma_integral(t)?.value).exp())
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        if t < self.bd.tau {
            return Err(Error::Domain(format!("sigma(t) needs t >= tau, got t = {t}")));
        }
        let g1 = self.gamma_integral(t)?.value;
        let g0 = self.gamma_integral(t - self.bd.tau)?.value;
        Ok((g0 - g1).exp())
    }

    /// `h_τ = [w(0) + ∫₀^τ (α w(ξ−τ)^p + β) ν] / ν(τ)`
    pub fn h_tau(&self) -> Result<Integral> {
        let tau = self.bd.tau;
        let p = self.bd.p;
        let g_tau = self.gamma_integral(tau)?.value;
        let head = self.bd.w.eval(0.0) * g_tau.exp();
        let bd = &self.bd;
        let rest = if bd.alpha.is_identically_zero() && bd.beta.is_identically_zero() {
            Integral::ZERO
        } else {
            integrate_with(
                |xi| {
                    let forcing = bd.alpha.eval(xi) * bd.history(xi - tau).powf(p) + bd.beta.eval(xi);
                    if forcing == 0.0 {
                        0.0
                    } else {
                        forcing * (g_tau - self.big_gamma(xi)).exp()
                    }
                },
                0.0,
                tau,
                &self.settings,
            )?
        };
        Ok(Integral {
            value: head + rest.value,
            error: rest.error,
        })
    }

    /// `α(t) σ^p(t) / ν^{p−1}(t)`, for `t ≥ τ`.
    pub fn kernel_integrand(&self, t: f64) -> f64 {
        let a = self.bd.alpha.eval(t);
        if a == 0.0 {
            return 0.0;
        }
        a * (self.bd.p * self.big_gamma(t - self.bd.tau) - self.big_gamma(t)).exp()
    }

    /// `∫_a^b α σ^p / ν^{p−1}`
    pub fn kernel_between(&self, a: f64, b: f64) -> Result<Integral> {
        if self.bd.alpha.is_identically_zero() || a == b {
            return Ok(Integral::ZERO);
        }
        integrate_with(|xi| self.kernel_integrand(xi), a, b, &self.settings)
    }

    /// `∫_τ^t α σ^p / ν^{p−1}` (without the `(p−1)` factor).
    pub fn kernel_integral(&self, t: f64) -> Result<Integral> {
        if t < self.bd.tau {
            return Err(Error::Domain(format!("kernel integral needs t >= tau, got t = {t}")));
        }
        self.kernel_between(self.bd.tau, t)
    }

    /// Kernel integral at every point of an ascending grid starting at `τ` or
    /// later, accumulated panel by panel.
    pub fn kernel_on_grid(&self, grid: &[f64]) -> Result<Vec<Integral>> {
        let mut out = Vec::with_capacity(grid.len());
        let mut acc = Integral::ZERO;
        let mut last = self.bd.tau;
        for &t in grid {
            if t < last {
                return Err(Error::Domain("kernel grid must be ascending and start at or after tau".into()));
            }
            acc = acc + self.kernel_between(last, t)?;
            last = t;
            out.push(acc);
        }
        Ok(out)
    }

    /// `∫_a^b β ν`
    pub fn beta_nu_integral(&self, a: f64, b: f64) -> Result<Integral> {
        if self.bd.beta.is_identically_zero() || a == b {
            return Ok(Integral::ZERO);
        }
        integrate_with(|xi| self.bd.beta.eval(xi) * (-self.big_gamma(xi)).exp(), a, b, &self.settings)
    }

    /// `ζ(t) = [h(τ)ν(τ) + ∫_τ^t βν] / ν(t)`
    pub fn zeta(&self, t: f64, h_at_tau: f64) -> Result<f64> {
        let tau = self.bd.tau;
        if t < tau {
            return Err(Error::Domain(format!("zeta(t) needs t >= tau, got t = {t}")));
        }
        if t == tau {
            return Ok(h_at_tau);
        }
        let gt = self.gamma_integral(t)?.value;
        let gtau = self.gamma_integral(tau)?.value;
        let forced = if self.bd.beta.is_identically_zero() {
            0.0
        } else {
            integrate_with(
                |xi| self.bd.beta.eval(xi) * (gt - self.big_gamma(xi)).exp(),
                tau,
                t,
                &self.settings,
            )?
            .value
        };
        Ok(h_at_tau * (gt - gtau).exp() + forced)
    }

    /// `ζ` along an ascending grid in `[τ, ∞)`, by the one-step recurrence
    /// `Z(t₂) = Z(t₁)e^{Γ(t₂)−Γ(t₁)} + ∫_{t₁}^{t₂} β e^{Γ(t₂)−Γ(ξ)}`.
    pub fn zeta_on_grid(&self, grid: &[f64], h_at_tau: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.len());
        let mut last = self.bd.tau;
        let mut g_last = self.gamma_integral(last)?.value;
        let mut z = h_at_tau;
        for &t in grid {
            if t < last {
                return Err(Error::Domain("zeta grid must be ascending and start at or after tau".into()));
            }
            if t > last {
                let gt = self.gamma_integral(t)?.value;
                let step = if self.bd.beta.is_identically_zero() {
                    0.0
                } else {
                    integrate_with(
                        |xi| self.bd.beta.eval(xi) * (gt - self.big_gamma(xi)).exp(),
                        last,
                        t,
                        &self.settings,
                    )?
                    .value
                };
                z = z * (gt - g_last).exp() + step;
                g_last = gt;
                last = t;
            }
            out.push(z);
        }
        Ok(out)
    }

    /// Right side of the Lemma-1 estimate given a precomputed kernel value.
    pub fn envelope_from_kernel(&self, t: f64, h_tau: f64, omega: f64, kernel: f64) -> Result<EnvelopeValue> {
        let p = self.bd.p;
        let base = h_tau * self.nu(self.bd.tau)? + omega;
        let denom = base.powf(1.0 - p) - (p - 1.0) * kernel;
        if !(denom > 0.0) {
            return Ok(EnvelopeValue::Expired);
        }
        let gt = self.gamma_integral(t)?.value;
        Ok(EnvelopeValue::Bound((denom.powf(-1.0 / (p - 1.0)) - omega) * gt.exp()))
    }

    /// Lemma-1 envelope at `t ≥ τ`.
    pub fn envelope_lemma1(&self, t: f64, h_tau: f64, omega: f64) -> Result<EnvelopeValue> {
        if t == self.bd.tau {
            return Ok(EnvelopeValue::Bound(h_tau));
        }
        let k = self.kernel_integral(t)?.value;
        self.envelope_from_kernel(t, h_tau, omega, k)
    }

    /// `(β(t)/α(t))^{1/p} ν(t−τ)`; `None` when `α(t) = 0 < β(t)`.
    pub fn omega_ratio(&self, t: f64) -> Option<f64> {
        let a = self.bd.alpha.eval(t);
        let b = self.bd.beta.eval(t);
        if b == 0.0 {
            return Some(0.0);
        }
        if a == 0.0 {
            return None;
        }
        Some((b / a).powf(1.0 / self.bd.p) * (-self.big_gamma(t - self.bd.tau)).exp())
    }

    /// `(g(0) + ∫₀ᵗ βν)/ν(t)`: the exact bound when `α ≡ 0`.
    /// [`Self::linear_bound`] on an ascending grid, accumulated panel by panel.
    pub fn linear_on_grid(&self, grid: &[f64], g0: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(grid.len());
        let (mut last, mut g_last, mut v) = (0.0, 0.0, g0);
        for &t in grid {
            if t < last {
                return Err(Error::Domain("linear grid must be ascending and non-negative".into()));
            }
            if t > last {
                let gt = self.gamma_integral(t)?.value;
                let step = if self.bd.beta.is_identically_zero() {
                    0.0
                } else {
                    integrate_with(
                        |xi| self.bd.beta.eval(xi) * (gt - self.big_gamma(xi)).exp(),
                        last,
                        t,
                        &self.settings,
                    )?
                    .value
                };
                v = v * (gt - g_last).exp() + step;
                g_last = gt;
                last = t;
            }
            out.push(v);
        }
        Ok(out)
    }

    pub fn linear_bound(&self, t: f64, g0: f64) -> Result<f64> {
        let gt = self.gamma_integral(t)?.value;
        let forced = if self.bd.beta.is_identically_zero() {
            0.0
        } else {
            integrate_with(
                |xi| self.bd.beta.eval(xi) * (gt - self.big_gamma(xi)).exp(),
                0.0,
                t,
                &self.settings,
            )?
            .value
        };
        Ok(g0 * gt.exp() + forced)
    }
}

pub fn nu(t: f64, gamma: &ScalarFn, settings: &QuadratureSettings) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("nu(t) needs t >= 0, got {t}")));
    }
    Ok((-integrate(gamma, 0.0, t, settings)?.value).exp())
}

pub fn sigma(t: f64, gamma: &ScalarFn, tau: f64, settings: &QuadratureSettings) -> Result<f64> {
    if t < tau {
        return Err(Error::Domain(format!("sigma(t) needs t >= tau, got t = {t}, tau = {tau}")));
    }
    Ok((-integrate(gamma, t - tau, t, settings)?.value).exp())
}

pub fn h_tau(bd: &BoundData, settings: &QuadratureSettings) -> Result<f64> {
    Ok(BoundContext::new(bd, bd.tau, *settings)?.h_tau()?.value)
}

pub fn kernel_integral(t: f64, bd: &BoundData, settings: &QuadratureSettings) -> Result<f64> {
    Ok(BoundContext::new(bd, t, *settings)?.kernel_integral(t)?.value)
}

/// Kernel integral over `[τ, ∞)` as the horizon value plus a modeled tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailIntegral {
    #[serde(serialize_with = "crate::num::real")]
    pub value: f64,
    #[serde(serialize_with = "crate::num::real")]
    pub horizon_part: f64,
    #[serde(serialize_with = "crate::num::real")]
    pub tail_part: f64,
    #[serde(serialize_with = "crate::num::real")]
    pub error: f64,
    pub certified: bool,
}

pub fn tail_integral(
    bd: &BoundData,
    horizon: f64,
    tail: &TailModel,
    settings: &QuadratureSettings,
) -> Result<TailIntegral> {
    let ctx = BoundContext::new(bd, horizon, *settings)?;
    tail_integral_in(&ctx, horizon, tail)
}

pub(crate) fn tail_integral_in(ctx: &BoundContext, horizon: f64, tail: &TailModel) -> Result<TailIntegral> {
    let (tail_part, certified) = tail.kernel.contribution()?;
    let k = ctx.kernel_integral(horizon)?;
    Ok(TailIntegral {
        value: k.value + tail_part,
        horizon_part: k.value,
        tail_part,
        error: k.error,
        certified,
    })
}

/// `sup_{t ≥ 0} ∫₀ᵗ γ` as seen on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunningSup {
    #[serde(serialize_with = "crate::num::real")]
    pub m: f64,
    #[serde(serialize_with = "crate::num::real")]
    pub argmax: f64,
    /// No tail assertion bounds the running integral past the horizon.
    pub horizon_limited: bool,
}

pub fn running_sup_integral(
    gamma: &ScalarFn,
    horizon: f64,
    grid_step: f64,
    gamma_tail: Option<&GammaTail>,
    settings: &QuadratureSettings,
) -> Result<RunningSup> {
    let prim = Primitive::new(gamma.clone(), horizon, (grid_step / 4.0).max(horizon * 1e-6), *settings)?;
    running_sup_with(&prim, horizon, grid_step, gamma_tail)
}

pub(crate) fn running_sup_with(
    prim: &Primitive,
    horizon: f64,
    grid_step: f64,
    gamma_tail: Option<&GammaTail>,
) -> Result<RunningSup> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput("running supremum needs horizon > 0".into()));
    }
    let grid = uniform_grid(0.0, horizon, grid_step);
    let (argmax, m, _) = refined_max(&grid, |t| prim.value(t));
    // Γ(0) = 0 exactly; keep it when nothing beats it.
    let (argmax, m) = if m <= 0.0 { (0.0, 0.0) } else { (argmax, m) };
    Ok(RunningSup {
        m,
        argmax,
        horizon_limited: gamma_tail.is_none(),
    })
}

/// `ω = sup_{t ≥ τ} (β/α)^{1/p} ν(t−τ)` as seen on `[τ, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaSup {
    #[serde(serialize_with = "crate::num::real")]
    pub omega: f64,
    #[serde(serialize_with = "crate::num::real")]
    pub argmax: f64,
    /// The grid maximum sits at the horizon: the supremum may be unbounded.
    pub growing_at_horizon: bool,
    pub horizon_limited: bool,
}

pub fn omega_sup(
    bd: &BoundData,
    horizon: f64,
    grid_step: f64,
    tail: &TailModel,
    settings: &QuadratureSettings,
) -> Result<OmegaSup> {
    let ctx = BoundContext::new(bd, horizon, *settings)?;
    omega_sup_in(&ctx, horizon, grid_step, tail)
}

pub(crate) fn omega_sup_in(ctx: &BoundContext, horizon: f64, grid_step: f64, tail: &TailModel) -> Result<OmegaSup> {
    let tau = ctx.tau();
    let bd = ctx.bounds();
    if bd.beta.is_identically_zero() {
        return Ok(OmegaSup {
            omega: 0.0,
            argmax: tau,
            growing_at_horizon: false,
            horizon_limited: false,
        });
    }
    let grid = uniform_grid(tau, horizon.max(tau), grid_step);
    for &t in &grid {
        if ctx.omega_ratio(t).is_none() {
            return Err(Error::Inapplicable {
                reason: format!("alpha vanishes at t = {t} while beta > 0, so omega is undefined"),
                suggestion: "use the linear bound (g(0) + int_0^t beta nu)/nu(t) of the alpha = 0 route".into(),
            });
        }
    }
    let (argmax, value, k) = refined_max(&grid, |t| ctx.omega_ratio(t).unwrap_or(f64::INFINITY));
    let growing = grid.len() > 1 && k == grid.len() - 1 && value > 0.0;
    let (omega, horizon_limited) = match tail.omega_bound {
        Some(b) => (value.max(b), false),
        None => (value, true),
    };
    Ok(OmegaSup {
        omega,
        argmax,
        growing_at_horizon: growing,
        horizon_limited,
    })
}
