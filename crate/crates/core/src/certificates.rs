//! Mechanical checks of the stability theorems: global existence, boundedness
//! and decay, each with the provenance of its conclusion.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrals::{omega_sup_in, refined_max, tail_integral_in, uniform_grid, BoundContext, EnvelopeValue};
use crate::model::{BoundData, ScalarFn};
use crate::num::{opt_real, real};
use crate::quadrature::{integrate_with, Primitive, QuadratureSettings};
use crate::tail::{TailBound, TailModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    T1,
    T2,
    C1,
    MU,
}

/// How far a conclusion reaches. Ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NotEstablished,
    /// Holds on `[0, horizon]`; nothing is asserted beyond it.
    HorizonLimited,
    Certified,
}

impl Verdict {
    pub fn holds(self) -> bool {
        self != Verdict::NotEstablished
    }

    pub fn is_certified(self) -> bool {
        self == Verdict::Certified
    }

    fn from_flags(holds: bool, certified: bool) -> Verdict {
        match (holds, certified) {
            (false, _) => Verdict::NotEstablished,
            (true, false) => Verdict::HorizonLimited,
            (true, true) => Verdict::Certified,
        }
    }
}

/// One checked inequality `lhs < rhs` (strict) or `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub name: String,
    #[serde(serialize_with = "real")]
    pub lhs: f64,
    #[serde(serialize_with = "real")]
    pub rhs: f64,
    /// `rhs − lhs`
    #[serde(serialize_with = "real")]
    pub slack: f64,
    pub strict: bool,
    /// Strict: the slack must exceed this. Non-strict: the slack may fall
    /// below zero by at most this much.
    #[serde(serialize_with = "real")]
    pub tolerance: f64,
    pub holds: bool,
    /// Where the worst grid value was found, for pointwise conditions.
    #[serde(serialize_with = "opt_real")]
    pub at: Option<f64>,
}

impl Margin {
    fn strict(name: &str, lhs: f64, rhs: f64, required: f64) -> Margin {
        let slack = rhs - lhs;
        Margin {
            name: name.into(),
            lhs,
            rhs,
            slack,
            strict: true,
            tolerance: required,
            holds: slack > required && slack > 0.0,
            at: None,
        }
    }

    fn non_strict(name: &str, lhs: f64, rhs: f64, allowance: f64, at: Option<f64>) -> Margin {
        let slack = rhs - lhs;
        Margin {
            name: name.into(),
            lhs,
            rhs,
            slack,
            strict: false,
            tolerance: allowance,
            holds: slack >= -allowance,
            at,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Constants {
    #[serde(serialize_with = "opt_real")]
    pub h_tau: Option<f64>,
    #[serde(serialize_with = "opt_real")]
    pub nu_tau: Option<f64>,
    #[serde(serialize_with = "opt_real")]
    pub omega: Option<f64>,
    /// Kernel integral over `[τ, ∞)`: horizon part plus modeled tail.
    #[serde(serialize_with = "opt_real")]
    pub tail_integral: Option<f64>,
    #[serde(serialize_with = "opt_real")]
    pub kernel_horizon: Option<f64>,
    #[serde(serialize_with = "opt_real")]
    pub m: Option<f64>,
    #[serde(serialize_with = "opt_real")]
    pub c: Option<f64>,
    #[serde(serialize_with = "opt_real")]
    pub q: Option<f64>,
    #[serde(serialize_with = "opt_real")]
    pub beta_nu_integral: Option<f64>,
    /// Uniform bound on `‖u‖` when boundedness holds.
    #[serde(serialize_with = "opt_real")]
    pub bound: Option<f64>,
    #[serde(serialize_with = "real")]
    pub quadrature_error: f64,
}

/// Evaluator of the bound a certificate provides for `‖u(t)‖`.
#[derive(Clone, Debug, Default)]
pub enum Envelope {
    #[default]
    None,
    /// The Lemma-1 expression; `omega = 0` gives the `f = 0` corollary form.
    Lemma1 {
        ctx: Arc<BoundContext>,
        h_tau: f64,
        omega: f64,
    },
    /// `q ζ(t)`, valid up to the first grid violation of its hypothesis.
    QZeta {
        ctx: Arc<BoundContext>,
        q: f64,
        h_at_tau: f64,
        valid_until: f64,
    },
    /// `(g(0) + ∫₀ᵗ βν)/ν(t)` for `α ≡ 0`.
    Linear { ctx: Arc<BoundContext>, g0: f64 },
    /// `1/μ(t)`
    Reciprocal { mu: ScalarFn },
}

impl Envelope {
    /// Start of the interval on which the envelope speaks.
    pub fn valid_from(&self) -> f64 {
        match self {
            Envelope::Lemma1 { ctx, .. } | Envelope::QZeta { ctx, .. } => ctx.tau(),
            _ => 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Envelope::None)
    }

    /// Bound at `t`; `None` outside the envelope's range or once expired.
    pub fn eval(&self, t: f64) -> Result<Option<f64>> {
        Ok(self.on_grid(&[t])?.pop().flatten())
    }

    /// Bounds along an ascending grid.
    pub fn on_grid(&self, grid: &[f64]) -> Result<Vec<Option<f64>>> {
        let start = self.valid_from();
        let skip = grid.partition_point(|&t| t < start);
        let inner = &grid[skip..];
        let mut out = vec![None; skip];
        match self {
            Envelope::None => out.extend(inner.iter().map(|_| None)),
            Envelope::Lemma1 { ctx, h_tau, omega } => {
                let kernel = ctx.kernel_on_grid(inner)?;
                for (&t, k) in inner.iter().zip(kernel) {
                    let v = if t == ctx.tau() {
                        EnvelopeValue::Bound(*h_tau)
                    } else {
                        ctx.envelope_from_kernel(t, *h_tau, *omega, k.value)?
                    };
                    out.push(v.bound());
                }
            }
            Envelope::QZeta {
                ctx,
                q,
                h_at_tau,
                valid_until,
            } => {
                let z = ctx.zeta_on_grid(inner, *h_at_tau)?;
                for (&t, z) in inner.iter().zip(z) {
                    out.push((t <= *valid_until).then_some(q * z));
                }
            }
            Envelope::Linear { ctx, g0 } => out.extend(ctx.linear_on_grid(inner, *g0)?.into_iter().map(Some)),
            Envelope::Reciprocal { mu } => out.extend(inner.iter().map(|&t| Some(1.0 / mu.eval(t)))),
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub theorem: Theorem,
    #[serde(serialize_with = "real")]
    pub horizon: f64,
    pub global_existence: Verdict,
    pub bounded: Verdict,
    pub decays_to_zero: Verdict,
    /// Some conclusion that holds does so only on `[0, horizon]`.
    pub horizon_limited: bool,
    pub constants: Constants,
    pub margins: Vec<Margin>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub envelope: Envelope,
}

impl Certificate {
    fn new(theorem: Theorem, horizon: f64) -> Self {
        Certificate {
            theorem,
            horizon,
            global_existence: Verdict::NotEstablished,
            bounded: Verdict::NotEstablished,
            decays_to_zero: Verdict::NotEstablished,
            horizon_limited: false,
            constants: Constants::default(),
            margins: Vec::new(),
            notes: Vec::new(),
            envelope: Envelope::None,
        }
    }

    /// Caps the long-term verdicts by global existence and sets the
    /// horizon-limited flag.
    fn finish(mut self) -> Self {
        self.bounded = self.bounded.min(self.global_existence);
        self.decays_to_zero = self.decays_to_zero.min(self.global_existence);
        self.horizon_limited = [self.global_existence, self.bounded, self.decays_to_zero]
            .contains(&Verdict::HorizonLimited);
        self
    }

    pub fn margin(&self, name: &str) -> Option<&Margin> {
        self.margins.iter().find(|m| m.name == name)
    }
}

/// Grid and quadrature settings shared by all checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    /// Spacing of the grid on which suprema and pointwise conditions are
    /// checked; `τ/50` when absent.
    #[serde(default)]
    pub grid_step: Option<f64>,
    #[serde(default)]
    pub quadrature: QuadratureSettings,
}

impl CheckOptions {
    pub fn step(&self, tau: f64) -> Result<f64> {
        let s = self.grid_step.unwrap_or(tau / 50.0);
        if !(s > 0.0) || !s.is_finite() {
            return Err(invalid(format!("grid step must be positive, got {s}")));
        }
        Ok(s)
    }
}

// Floor under the quadrature error so that ties at rounding level never certify.
fn rounding(x: f64) -> f64 {
    8.0 * f64::EPSILON * x.abs()
}

fn check_horizon(bd: &BoundData, horizon: f64) -> Result<()> {
    if !(horizon > bd.tau) || !horizon.is_finite() {
        return Err(invalid(format!("horizon must be finite and exceed tau, got {horizon}")));
    }
    Ok(())
}

fn vanishes_on(f: &ScalarFn, grid: &[f64]) -> bool {
    f.is_identically_zero() || grid.iter().all(|&t| f.eval(t) == 0.0)
}

/// `sup_{t∈[a,horizon]} Γ(t) − Γ(a)`, never below 0.
fn running_sup_from(prim: &Primitive, a: f64, horizon: f64, step: f64) -> f64 {
    let base = prim.value(a);
    let grid = uniform_grid(a, horizon, step);
    let (_, m, _) = refined_max(&grid, |t| prim.value(t) - base);
    m.max(0.0)
}

/// Finite data consistent with `∫₀ᵗγ → −∞`: the running integral is negative
/// and at its running minimum at the horizon.
fn gamma_decreasing_at_horizon(prim: &Primitive, horizon: f64, step: f64) -> bool {
    let end = prim.value(horizon);
    end < 0.0 && uniform_grid(0.0, horizon, step).iter().all(|&t| prim.value(t) >= end)
}

fn boundedness(cert: &mut Certificate, ctx: &BoundContext, horizon: f64, step: f64, tail: &TailModel) -> Verdict {
    let m = running_sup_from(ctx.primitive(), 0.0, horizon, step);
    cert.constants.m = Some(m);
    if tail.gamma.is_none() {
        cert.notes
            .push("sup of the running integral of gamma is taken over the horizon only (no gamma tail model)".into());
    }
    Verdict::from_flags(true, tail.gamma.is_some())
}

fn decay(cert: &mut Certificate, ctx: &BoundContext, horizon: f64, step: f64, tail: &TailModel) -> Verdict {
    match tail.gamma {
        Some(g) if g.diverges_to_minus_infinity() => Verdict::Certified,
        _ => {
            cert.notes.push(
                "divergence of the running integral of gamma to -inf is not asserted by the tail model; decay is not concluded beyond the horizon"
                    .into(),
            );
            if gamma_decreasing_at_horizon(ctx.primitive(), horizon, step) {
                Verdict::HorizonLimited
            } else {
                Verdict::NotEstablished
            }
        }
    }
}

/// Global existence, boundedness and decay from the `ω`/kernel condition.
pub fn check_theorem1(bd: &BoundData, horizon: f64, tail: &TailModel, opts: &CheckOptions) -> Result<Certificate> {
    check_horizon(bd, horizon)?;
    tail.validate()?;
    let step = opts.step(bd.tau)?;
    let after = uniform_grid(bd.tau, horizon, step);
    if vanishes_on(&bd.alpha, &after) && !vanishes_on(&bd.beta, &after) {
        return Err(Error::Inapplicable {
            reason: "alpha vanishes on [tau, horizon] while beta does not, so omega is undefined".into(),
            suggestion: "use the exact linear bound (g(0) + int_0^t beta nu)/nu(t), see linear_certificate".into(),
        });
    }
    let ctx = Arc::new(BoundContext::new(bd, horizon, opts.quadrature)?);
    let p = bd.p;
    let mut cert = Certificate::new(Theorem::T1, horizon);

    let h = ctx.h_tau()?;
    let nu_tau = ctx.nu(bd.tau)?;
    let om = omega_sup_in(&ctx, horizon, step, tail)?;
    let ti = tail_integral_in(&ctx, horizon, tail)?;
    cert.constants.h_tau = Some(h.value);
    cert.constants.nu_tau = Some(nu_tau);
    cert.constants.omega = Some(om.omega);
    cert.constants.tail_integral = Some(ti.value);
    cert.constants.kernel_horizon = Some(ti.horizon_part);
    if om.growing_at_horizon {
        cert.notes.push(format!(
            "the omega ratio is still growing at the horizon (grid maximum at t = {}); the supremum may be unbounded",
            om.argmax
        ));
    }
    if !ti.certified {
        cert.notes.push("kernel tail truncated at the horizon".into());
    }

    let base = h.value * nu_tau;
    let i = ti.value;
    let (rhs, d_rhs) = if i > 0.0 {
        let r = ((p - 1.0) * i).powf(-1.0 / (p - 1.0));
        (r - base, ((p - 1.0) * i).powf(-p / (p - 1.0)))
    } else {
        (f64::INFINITY, 0.0)
    };
    let err = d_rhs * ti.error + nu_tau * h.error;
    cert.constants.quadrature_error = err;
    let required = 10.0 * (err + rounding(rhs.min(1e300)) + rounding(om.omega));
    let margin = Margin::strict("omega_below_rhs", om.omega, rhs, required);
    let holds = margin.holds;
    cert.margins.push(margin);

    let omega_certified = bd.beta.is_identically_zero() || !om.horizon_limited;
    cert.global_existence = Verdict::from_flags(holds, ti.certified && omega_certified);
    cert.envelope = Envelope::Lemma1 {
        ctx: ctx.clone(),
        h_tau: h.value,
        omega: om.omega,
    };
    if holds {
        let denom = (base + om.omega).powf(1.0 - p) - (p - 1.0) * i;
        let c = denom.powf(-1.0 / (p - 1.0)) - om.omega;
        cert.constants.c = Some(c);
        cert.bounded = boundedness(&mut cert, &ctx, horizon, step, tail);
        cert.constants.bound = cert.constants.m.map(|m| c * m.exp());
        cert.decays_to_zero = decay(&mut cert, &ctx, horizon, step, tail);
    }
    Ok(cert.finish())
}

/// The `f = 0` specialization with `ω = 0`.
pub fn check_corollary1(bd: &BoundData, horizon: f64, tail: &TailModel, opts: &CheckOptions) -> Result<Certificate> {
    check_horizon(bd, horizon)?;
    tail.validate()?;
    let step = opts.step(bd.tau)?;
    if !vanishes_on(&bd.beta, &uniform_grid(0.0, horizon, step)) {
        return Err(invalid("the zero-forcing certificate requires beta identically zero"));
    }
    let ctx = Arc::new(BoundContext::new(bd, horizon, opts.quadrature)?);
    let p = bd.p;
    let mut cert = Certificate::new(Theorem::C1, horizon);

    let h = ctx.h_tau()?;
    let nu_tau = ctx.nu(bd.tau)?;
    let ti = tail_integral_in(&ctx, horizon, tail)?;
    cert.constants.h_tau = Some(h.value);
    cert.constants.nu_tau = Some(nu_tau);
    cert.constants.omega = Some(0.0);
    cert.constants.tail_integral = Some(ti.value);
    cert.constants.kernel_horizon = Some(ti.horizon_part);
    if !ti.certified {
        cert.notes.push("kernel tail truncated at the horizon".into());
    }

    let base = h.value * nu_tau;
    let lhs = (p - 1.0) * ti.value;
    let rhs = base.powf(1.0 - p);
    let err = (p - 1.0) * ti.error + (p - 1.0) * base.powf(-p) * nu_tau * h.error;
    cert.constants.quadrature_error = err;
    let required = 10.0 * (err + rounding(rhs.min(1e300)) + rounding(lhs));
    let margin = Margin::strict("kernel_below_history_term", lhs, rhs, required);
    let holds = margin.holds;
    cert.margins.push(margin);

    cert.global_existence = Verdict::from_flags(holds, ti.certified);
    cert.envelope = Envelope::Lemma1 {
        ctx: ctx.clone(),
        h_tau: h.value,
        omega: 0.0,
    };
    if holds {
        let c = (rhs - lhs).powf(-1.0 / (p - 1.0));
        cert.constants.c = Some(c);
        cert.bounded = boundedness(&mut cert, &ctx, horizon, step, tail);
        cert.constants.bound = cert.constants.m.map(|m| c * m.exp());
        cert.decays_to_zero = decay(&mut cert, &ctx, horizon, step, tail);
    }
    Ok(cert.finish())
}

const NON_STRICT_REL: f64 = 1e-9;

/// The `q ζ` certificate for a user-chosen `q > 1`.
pub fn check_theorem2(
    bd: &BoundData,
    q: f64,
    horizon: f64,
    tail: &TailModel,
    opts: &CheckOptions,
) -> Result<Certificate> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(invalid(format!("q must be finite and exceed 1, got {q}")));
    }
    check_horizon(bd, horizon)?;
    tail.validate()?;
    let step = opts.step(bd.tau)?;
    let grid = uniform_grid(bd.tau, horizon, step);
    if vanishes_on(&bd.beta, &grid) && !vanishes_on(&bd.alpha, &grid) {
        return Err(Error::Inapplicable {
            reason: "beta vanishes while alpha does not; the pointwise condition can only hold when alpha is identically zero"
                .into(),
            suggestion: "use the zero-forcing certificate (C1) instead".into(),
        });
    }
    let ctx = Arc::new(BoundContext::new(bd, horizon, opts.quadrature)?);
    let p = bd.p;
    let mut cert = Certificate::new(Theorem::T2, horizon);
    cert.constants.q = Some(q);

    let h = ctx.h_tau()?;
    let nu_tau = ctx.nu(bd.tau)?;
    cert.constants.h_tau = Some(h.value);
    cert.constants.nu_tau = Some(nu_tau);
    cert.constants.quadrature_error = h.error;
    let positive = Margin::strict("h_tau_positive", 0.0, h.value, 10.0 * h.error);
    let positive_holds = positive.holds;
    cert.margins.push(positive);
    if !positive_holds {
        cert.notes.push("h(tau) is not positive; the pointwise condition is not evaluated".into());
        return Ok(cert.finish());
    }

    let zeta = ctx.zeta_on_grid(&grid, h.value)?;
    let mut worst: Option<(f64, f64, f64, f64)> = None;
    let mut first_violation = None;
    for (&t, &z) in grid.iter().zip(&zeta) {
        let a = bd.alpha.eval(t);
        let lhs = if a == 0.0 { 0.0 } else { a * (p * (ctx.big_gamma(t - bd.tau) - ctx.big_gamma(t))).exp() };
        let rhs = (q - 1.0) * bd.beta.eval(t) / (q * z).powf(p);
        let scale = lhs.abs().max(rhs.abs());
        let rel = if scale > 0.0 { (rhs - lhs) / scale } else { 0.0 };
        if rhs - lhs < -NON_STRICT_REL * scale && first_violation.is_none() {
            first_violation = Some(t);
        }
        if worst.is_none_or(|w| rel < w.3) {
            worst = Some((t, lhs, rhs, rel));
        }
    }
    let (at, lhs, rhs, _) = worst.unwrap_or((bd.tau, 0.0, 0.0, 0.0));
    let margin = Margin::non_strict("pointwise_alpha_sigma", lhs, rhs, NON_STRICT_REL * lhs.abs().max(rhs.abs()), Some(at));
    let holds = first_violation.is_none();
    cert.margins.push(margin);
    if !tail.pointwise_holds {
        cert.notes
            .push("the pointwise condition is checked on [tau, horizon] only (tail model does not assert it beyond)".into());
    }
    cert.global_existence = Verdict::from_flags(holds, tail.pointwise_holds);
    cert.envelope = Envelope::QZeta {
        ctx: ctx.clone(),
        q,
        h_at_tau: h.value,
        valid_until: first_violation.unwrap_or(f64::INFINITY),
    };
    if let Some(t) = first_violation {
        cert.notes.push(format!("pointwise condition first fails at t = {t}"));
        return Ok(cert.finish());
    }

    // Boundedness: sup_{t≥τ} ∫_τ^t γ < ∞ and ∫_τ^∞ βν < ∞.
    let m = running_sup_from(ctx.primitive(), bd.tau, horizon, step);
    cert.constants.m = Some(m);
    let beta_nu = ctx.beta_nu_integral(bd.tau, horizon)?;
    let (beta_tail, beta_certified) = match tail.beta_nu {
        Some(b) => b.contribution()?,
        None => TailBound::Truncate.contribution()?,
    };
    let beta_nu_total = beta_nu.value + beta_tail;
    cert.constants.beta_nu_integral = Some(beta_nu_total);
    cert.constants.bound = Some(q * (ctx.big_gamma(bd.tau) + m).exp() * (h.value * nu_tau + beta_nu_total));
    if !beta_certified {
        cert.notes.push("finiteness of int beta nu is only established on the horizon".into());
    }
    cert.bounded = Verdict::from_flags(true, tail.gamma.is_some() && beta_certified);

    // Decay: ∫γ → −∞ and either ∫βν < ∞ or β/γ → 0.
    let gamma_div = tail.gamma.is_some_and(|g| g.diverges_to_minus_infinity());
    let branch = beta_certified || tail.beta_over_gamma_vanishes;
    cert.decays_to_zero = if gamma_div && branch {
        Verdict::Certified
    } else {
        cert.notes.push("limit conditions for decay are not asserted by the tail model".into());
        let ratio_falls = ratio_trend(&bd.beta, &bd.gamma, bd.tau, horizon, step) == Trend::Falling;
        let horizon_evidence =
            gamma_decreasing_at_horizon(ctx.primitive(), horizon, step) && (beta_nu.value.is_finite() || ratio_falls);
        Verdict::from_flags(horizon_evidence, false)
    };
    Ok(cert.finish())
}

/// `‖u‖ ≤ 1/μ` from `α μ/μ^p(t−τ) + βμ ≤ −γ − μ̇/μ` and `w ≤ 1/μ` on the
/// history interval. Without `mu_dot`, central differences at `10⁻⁶τ` are used.
pub fn check_mu_certificate(
    mu: &ScalarFn,
    mu_dot: Option<&ScalarFn>,
    bd: &BoundData,
    horizon: f64,
    tail: &TailModel,
    opts: &CheckOptions,
) -> Result<Certificate> {
    check_horizon(bd, horizon)?;
    tail.validate()?;
    let step = opts.step(bd.tau)?;
    let tau = bd.tau;
    let grid = uniform_grid(0.0, horizon, step);
    let hist = uniform_grid(-tau, 0.0, step);
    for &t in hist.iter().chain(&grid) {
        let m = mu.eval(t);
        if !(m > 0.0) || !m.is_finite() {
            return Err(invalid(format!("mu must be positive and finite, mu({t}) = {m}")));
        }
    }
    let mut cert = Certificate::new(Theorem::MU, horizon);
    let dh = 1e-6 * tau;
    let (rel, what) = match mu_dot {
        Some(_) => (1e-12, "supplied"),
        None => (1e-6, "central differences"),
    };
    cert.notes.push(format!("mu derivative from {what}"));

    let mut worst: Option<(f64, f64, f64, f64)> = None;
    let mut first_violation = None;
    for &t in &grid {
        let m = mu.eval(t);
        let md = match mu_dot {
            Some(d) => d.eval(t),
            None => (mu.eval(t + dh) - mu.eval(t - dh)) / (2.0 * dh),
        };
        let a = bd.alpha.eval(t);
        let push = if a == 0.0 { 0.0 } else { a * m / mu.eval(t - tau).powf(bd.p) };
        let lhs = push + bd.beta.eval(t) * m;
        let rhs = -bd.gamma.eval(t) - md / m;
        let allowance = rel * (1.0 + lhs.abs() + rhs.abs());
        let slack = rhs - lhs;
        if slack < -allowance && first_violation.is_none() {
            first_violation = Some(t);
        }
        let score = slack / (1.0 + lhs.abs() + rhs.abs());
        if worst.is_none_or(|w| score < w.3) {
            worst = Some((t, lhs, rhs, score));
        }
    }
    let (at, lhs, rhs, _) = worst.unwrap_or((0.0, 0.0, 0.0, 0.0));
    let main = Margin::non_strict("mu_inequality", lhs, rhs, rel * (1.0 + lhs.abs() + rhs.abs()), Some(at));
    let mut worst_h: Option<(f64, f64, f64)> = None;
    for &t in &hist {
        let w = bd.w.eval(t);
        let r = 1.0 / mu.eval(t);
        if worst_h.is_none_or(|x| r - w < x.2 - x.1) {
            worst_h = Some((t, w, r));
        }
    }
    let (ht, hw, hr) = worst_h.unwrap_or((0.0, 0.0, 0.0));
    let history = Margin::non_strict("history_below_reciprocal", hw, hr, 1e-12 * hr.abs(), Some(ht));
    let holds = first_violation.is_none() && history.holds;
    cert.margins.push(main);
    cert.margins.push(history);
    if let Some(t) = first_violation {
        cert.notes.push(format!("mu inequality first fails at t = {t}"));
    }
    if !tail.pointwise_holds {
        cert.notes
            .push("the mu inequality is checked on [0, horizon] only (tail model does not assert it beyond)".into());
    }
    cert.global_existence = Verdict::from_flags(holds, tail.pointwise_holds);
    cert.envelope = Envelope::Reciprocal { mu: mu.clone() };
    if holds {
        let sup = grid.iter().map(|&t| 1.0 / mu.eval(t)).fold(0.0, f64::max);
        cert.constants.bound = Some(sup);
        cert.bounded = Verdict::HorizonLimited;
        cert.notes.push("the mu bound makes no claim about boundedness or decay beyond the horizon".into());
    }
    Ok(cert.finish())
}

/// Certificate from the exact bound `‖u(t)‖ ≤ (g(0) + ∫₀ᵗβν)/ν(t)`, valid
/// when `α ≡ 0`.
pub fn linear_certificate(bd: &BoundData, horizon: f64, tail: &TailModel, opts: &CheckOptions) -> Result<Certificate> {
    check_horizon(bd, horizon)?;
    tail.validate()?;
    let step = opts.step(bd.tau)?;
    let grid = uniform_grid(0.0, horizon, step);
    if !vanishes_on(&bd.alpha, &grid) {
        return Err(invalid("the linear bound requires alpha identically zero"));
    }
    let ctx = Arc::new(BoundContext::new(bd, horizon, opts.quadrature)?);
    let mut cert = Certificate::new(Theorem::T1, horizon);
    cert.notes.push(
        "alpha vanishes identically: omega is undefined, so the exact linear bound (g(0) + int_0^t beta nu)/nu(t) is used"
            .into(),
    );
    let g0 = bd.w.eval(0.0);
    cert.global_existence = Verdict::from_flags(true, bd.alpha.is_identically_zero());
    cert.envelope = Envelope::Linear { ctx: ctx.clone(), g0 };

    let m = running_sup_from(ctx.primitive(), 0.0, horizon, step);
    cert.constants.m = Some(m);
    let beta_nu = ctx.beta_nu_integral(0.0, horizon)?;
    let (beta_tail, beta_certified) = match tail.beta_nu {
        Some(b) => b.contribution()?,
        None => (0.0, false),
    };
    let total = beta_nu.value + beta_tail;
    cert.constants.beta_nu_integral = Some(total);
    cert.constants.bound = Some(m.exp() * (g0 + total));
    cert.constants.quadrature_error = beta_nu.error;
    cert.bounded = Verdict::from_flags(true, tail.gamma.is_some() && beta_certified);
    let gamma_div = tail.gamma.is_some_and(|g| g.diverges_to_minus_infinity());
    cert.decays_to_zero = if gamma_div && (beta_certified || tail.beta_over_gamma_vanishes) {
        Verdict::Certified
    } else {
        Verdict::from_flags(gamma_decreasing_at_horizon(ctx.primitive(), horizon, step), false)
    };
    Ok(cert.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Falling,
    NotFalling,
    Undefined,
}

/// Whether `|β/γ|` falls over the second half of `[a, horizon]` and ends
/// below half its value at `a`.
fn ratio_trend(beta: &ScalarFn, gamma: &ScalarFn, a: f64, horizon: f64, step: f64) -> Trend {
    let grid = uniform_grid(a, horizon, step);
    let mut ratios = Vec::with_capacity(grid.len());
    for &t in &grid {
        let g = gamma.eval(t);
        if g == 0.0 {
            return Trend::Undefined;
        }
        ratios.push((beta.eval(t) / g).abs());
    }
    let half = &ratios[ratios.len() / 2..];
    let falling = half.windows(2).all(|w| w[1] <= w[0]);
    let last = *ratios.last().unwrap_or(&0.0);
    if falling && (last < 0.5 * ratios[0] || last == 0.0) {
        Trend::Falling
    } else {
        Trend::NotFalling
    }
}

/// Long-term behavior of `(γ, β)`, each conclusion with its provenance.
#[derive(Debug, Clone, Serialize)]
pub struct LongTerm {
    /// `sup_{t∈[0,horizon]} ∫₀ᵗ γ`
    #[serde(serialize_with = "real")]
    pub m: f64,
    #[serde(serialize_with = "real")]
    pub m_argmax: f64,
    /// `M` is also the supremum over `[0, ∞)`.
    pub m_is_global: Verdict,
    pub gamma_integral_to_minus_infinity: Verdict,
    #[serde(serialize_with = "real")]
    pub beta_nu_horizon: f64,
    pub beta_nu_finite: Verdict,
    #[serde(serialize_with = "real")]
    pub beta_over_gamma_at_horizon: f64,
    pub beta_over_gamma_trend: Trend,
    pub beta_over_gamma_to_zero: Verdict,
}

pub fn classify_longterm(
    gamma: &ScalarFn,
    beta: &ScalarFn,
    horizon: f64,
    tail: &TailModel,
    opts: &CheckOptions,
) -> Result<LongTerm> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(invalid("horizon must be positive and finite"));
    }
    tail.validate()?;
    let step = opts.grid_step.unwrap_or(horizon / 500.0);
    let prim = Primitive::new(gamma.clone(), horizon, (horizon / 256.0).min(step * 4.0), opts.quadrature)?;
    let grid = uniform_grid(0.0, horizon, step);
    let (argmax, m, _) = refined_max(&grid, |t| prim.value(t));
    let (argmax, m) = if m <= 0.0 { (0.0, 0.0) } else { (argmax, m) };

    let diverges = match tail.gamma {
        Some(g) if g.diverges_to_minus_infinity() => Verdict::Certified,
        _ => Verdict::from_flags(gamma_decreasing_at_horizon(&prim, horizon, step), false),
    };
    let beta_nu = if beta.is_identically_zero() {
        0.0
    } else {
        integrate_with(|t| beta.eval(t) * (-prim.value(t)).exp(), 0.0, horizon, &opts.quadrature)?.value
    };
    let beta_nu_finite = match tail.beta_nu {
        Some(b) if b.contribution()?.1 => Verdict::Certified,
        _ => Verdict::from_flags(beta_nu.is_finite(), beta.is_identically_zero()),
    };
    let g_end = gamma.eval(horizon);
    let ratio_end = if g_end == 0.0 { f64::NAN } else { beta.eval(horizon) / g_end };
    let trend = ratio_trend(beta, gamma, 0.0, horizon, step);
    let to_zero = if tail.beta_over_gamma_vanishes || beta.is_identically_zero() {
        Verdict::Certified
    } else {
        Verdict::from_flags(trend == Trend::Falling, false)
    };
    Ok(LongTerm {
        m,
        m_argmax: argmax,
        m_is_global: Verdict::from_flags(true, tail.gamma.is_some()),
        gamma_integral_to_minus_infinity: diverges,
        beta_nu_horizon: beta_nu,
        beta_nu_finite,
        beta_over_gamma_at_horizon: ratio_end,
        beta_over_gamma_trend: trend,
        beta_over_gamma_to_zero: to_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tail::GammaTail;
    use std::f64::consts::E;

    fn c(x: f64) -> ScalarFn {
        ScalarFn::constant(x)
    }

    fn opts() -> CheckOptions {
        CheckOptions::default()
    }

    fn t1_scenario(alpha: f64) -> BoundData {
        BoundData::new(c(-1.0), c(alpha), c(0.0), 2.0, 1.0, c(0.1)).unwrap()
    }

    fn decaying_tail(alpha: f64) -> TailModel {
        // kernel integrand α e^{2−ξ} on [T, ∞) integrates to α e^{2−T}
        TailModel::with_kernel(TailBound::ExponentialBound {
            c: alpha * E.powf(2.0 - 20.0),
            lambda: 1.0,
        })
        .gamma(GammaTail::NegativeConstant { lambda: 1.0 })
    }

    #[test]
    fn theorem1_certifies_small_alpha() {
        let cert = check_theorem1(&t1_scenario(0.1), 20.0, &decaying_tail(0.1), &opts()).unwrap();
        assert_eq!(cert.global_existence, Verdict::Certified);
        assert_eq!(cert.decays_to_zero, Verdict::Certified);
        assert_eq!(cert.bounded, Verdict::Certified);
        let k = &cert.constants;
        assert_eq!(k.omega, Some(0.0));
        let h_tilde = (0.1 + 0.001 * (E - 1.0)) / E;
        assert!((k.h_tau.unwrap() - h_tilde).abs() < 1e-12);
        assert!((k.tail_integral.unwrap() - 0.1 * E).abs() < 1e-10);
        let m = cert.margin("omega_below_rhs").unwrap();
        let rhs = 1.0 / (0.1 * E) - h_tilde * E;
        assert!((m.rhs - rhs).abs() < 1e-9);
        assert!(m.slack > 3.0);
        assert!(!cert.horizon_limited);
    }

    #[test]
    fn theorem1_rejects_large_alpha() {
        let cert = check_theorem1(&t1_scenario(50.0), 20.0, &decaying_tail(50.0), &opts()).unwrap();
        assert_eq!(cert.global_existence, Verdict::NotEstablished);
        assert_eq!(cert.bounded, Verdict::NotEstablished);
        assert_eq!(cert.decays_to_zero, Verdict::NotEstablished);
        assert!(cert.margin("omega_below_rhs").unwrap().slack < 0.0);
    }

    #[test]
    fn theorem1_truncated_tail_is_horizon_limited() {
        let cert = check_theorem1(&t1_scenario(0.1), 20.0, &TailModel::truncate(), &opts()).unwrap();
        assert_eq!(cert.global_existence, Verdict::HorizonLimited);
        assert!(cert.horizon_limited);
        assert!(cert.decays_to_zero <= Verdict::HorizonLimited);
    }

    #[test]
    fn theorem1_linear_route_for_zero_alpha() {
        let bd = BoundData::new(c(-1.0), c(0.0), c(1.0), 2.0, 1.0, c(0.1)).unwrap();
        assert!(matches!(
            check_theorem1(&bd, 10.0, &TailModel::truncate(), &opts()),
            Err(Error::Inapplicable { .. })
        ));
        let cert = linear_certificate(&bd, 10.0, &TailModel::truncate(), &opts()).unwrap();
        assert_eq!(cert.global_existence, Verdict::Certified);
        // (0.1 + ∫₀ᵗ e^ξ dξ) e^{−t}
        let t = 3.0;
        let v = cert.envelope.eval(t).unwrap().unwrap();
        assert!((v - (0.1 + t.exp() - 1.0) * (-t).exp()).abs() < 1e-10);
    }

    #[test]
    fn bounded_flag_follows_gamma_tail() {
        let bd = BoundData::new(ScalarFn::new(f64::cos), c(0.01), c(0.0), 2.0, 1.0, c(0.1)).unwrap();
        let cert = check_theorem1(&bd, 20.0, &TailModel::truncate(), &opts()).unwrap();
        assert_eq!(cert.bounded, Verdict::HorizonLimited);
        assert!((cert.constants.m.unwrap() - 1.0).abs() < 1e-9);
        let cert = check_theorem1(
            &bd,
            20.0,
            &TailModel::with_kernel(TailBound::ClosedForm { value: 0.0 }).gamma(GammaTail::NonPositive),
            &opts(),
        )
        .unwrap();
        assert_eq!(cert.bounded, Verdict::Certified);
        assert_eq!(cert.decays_to_zero, Verdict::NotEstablished);
    }

    #[test]
    fn corollary_matches_theorem1() {
        let bd = t1_scenario(0.1);
        let tail = decaying_tail(0.1);
        let a = check_theorem1(&bd, 20.0, &tail, &opts()).unwrap();
        let b = check_corollary1(&bd, 20.0, &tail, &opts()).unwrap();
        assert_eq!(a.global_existence, b.global_existence);
        assert_eq!(a.bounded, b.bounded);
        assert_eq!(a.decays_to_zero, b.decays_to_zero);
        let grid = uniform_grid(1.0, 20.0, 0.5);
        for (x, y) in a.envelope.on_grid(&grid).unwrap().iter().zip(b.envelope.on_grid(&grid).unwrap()) {
            let (x, y) = (x.unwrap(), y.unwrap());
            assert!((x - y).abs() <= 1e-10 * x.abs());
        }
        let bad = BoundData::new(c(-1.0), c(0.1), c(0.5), 2.0, 1.0, c(0.1)).unwrap();
        assert!(check_corollary1(&bad, 20.0, &tail, &opts()).is_err());
    }

    #[test]
    fn corollary_zero_alpha() {
        let bd = BoundData::new(c(-0.5), c(0.0), c(0.0), 3.0, 1.0, c(0.2)).unwrap();
        let cert = check_corollary1(&bd, 10.0, &TailModel::with_kernel(TailBound::ClosedForm { value: 0.0 }), &opts())
            .unwrap();
        assert_eq!(cert.global_existence, Verdict::Certified);
        let h = cert.constants.h_tau.unwrap();
        let nu_tau = cert.constants.nu_tau.unwrap();
        for t in [1.0, 2.0, 7.5] {
            let v = cert.envelope.eval(t).unwrap().unwrap();
            assert!((v - h * nu_tau * (-0.5 * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn theorem2_zero_alpha_is_trivial() {
        let bd = BoundData::new(c(-1.0), c(0.0), c(1.0), 2.0, 1.0, c(0.1)).unwrap();
        let cert = check_theorem2(&bd, 2.0, 10.0, &TailModel::truncate(), &opts()).unwrap();
        assert_eq!(cert.global_existence, Verdict::HorizonLimited);
        let m = cert.margin("pointwise_alpha_sigma").unwrap();
        assert_eq!(m.lhs, 0.0);
        assert!(m.holds);
        assert!(check_theorem2(&bd, 1.0, 10.0, &TailModel::truncate(), &opts()).is_err());
    }

    #[test]
    fn theorem2_zero_beta_inapplicable() {
        let bd = t1_scenario(0.1);
        assert!(matches!(
            check_theorem2(&bd, 2.0, 10.0, &TailModel::truncate(), &opts()),
            Err(Error::Inapplicable { .. })
        ));
    }

    #[test]
    fn theorem2_decay_through_ratio_branch() {
        let beta = ScalarFn::new(|t: f64| 1.0 / (1.0 + t));
        let bd = BoundData::new(c(-1.0), c(0.0), beta, 2.0, 1.0, c(0.1)).unwrap();
        let tail = TailModel::truncate()
            .gamma(GammaTail::NegativeConstant { lambda: 1.0 })
            .beta_over_gamma_vanishes()
            .pointwise_holds();
        let cert = check_theorem2(&bd, 2.0, 20.0, &tail, &opts()).unwrap();
        assert_eq!(cert.global_existence, Verdict::Certified);
        assert_eq!(cert.decays_to_zero, Verdict::Certified);
        assert_eq!(cert.bounded, Verdict::HorizonLimited);
    }

    #[test]
    fn mu_examples() {
        let bd = BoundData::new(c(-2.0), c(0.0), c(0.0), 2.0, 1.0, c(0.5)).unwrap();
        let tail = TailModel::truncate().pointwise_holds();
        let cert = check_mu_certificate(&c(1.0), None, &bd, 5.0, &tail, &opts()).unwrap();
        assert_eq!(cert.global_existence, Verdict::Certified);
        assert_eq!(cert.constants.bound, Some(1.0));

        let bd = BoundData::new(c(-0.5), c(0.0), c(0.0), 2.0, 1.0, c(0.1)).unwrap();
        let mu = ScalarFn::new(f64::exp);
        let cert = check_mu_certificate(&mu, Some(&mu), &bd, 5.0, &tail, &opts()).unwrap();
        assert_eq!(cert.global_existence, Verdict::NotEstablished);
        let m = cert.margin("mu_inequality").unwrap();
        assert!((m.rhs - (0.5 - 1.0)).abs() < 1e-12);

        assert!(check_mu_certificate(&c(-1.0), None, &bd, 5.0, &tail, &opts()).is_err());
    }

    #[test]
    fn longterm_examples() {
        let tail = TailModel::with_kernel(TailBound::ExponentialBound { c: 1.0, lambda: 1.0 })
            .gamma(GammaTail::NegativeConstant { lambda: 1.0 });
        let lt = classify_longterm(&c(-1.0), &c(0.0), 10.0, &tail, &opts()).unwrap();
        assert_eq!(lt.m, 0.0);
        assert_eq!(lt.m_is_global, Verdict::Certified);
        assert_eq!(lt.gamma_integral_to_minus_infinity, Verdict::Certified);

        let g = ScalarFn::new(|t: f64| -1.0 / (1.0 + t));
        let lt = classify_longterm(&g, &c(0.0), 50.0, &TailModel::truncate(), &opts()).unwrap();
        assert_eq!(lt.gamma_integral_to_minus_infinity, Verdict::HorizonLimited);
        let lt = classify_longterm(
            &g,
            &c(0.0),
            50.0,
            &TailModel::truncate().gamma(GammaTail::HarmonicDecay { c: 1.0 }),
            &opts(),
        )
        .unwrap();
        assert_eq!(lt.gamma_integral_to_minus_infinity, Verdict::Certified);

        let lt = classify_longterm(&c(-1.0), &c(1.0), 10.0, &TailModel::truncate(), &opts()).unwrap();
        assert_eq!(lt.beta_over_gamma_at_horizon, -1.0);
        assert_eq!(lt.beta_over_gamma_to_zero, Verdict::NotEstablished);
    }
}
