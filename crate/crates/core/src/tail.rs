//! Explicit assertions about behavior beyond the computed horizon.
//!
//! Nothing about `[horizon, ∞)` is ever extrapolated from data. Improper
//! integrals and limits are only concluded when one of these models says so,
//! and the resulting verdicts record which assertion they relied on.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Bound on `∫_T^∞` of a nonnegative integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailBound {
    /// The exact value of the tail integral.
    ClosedForm { value: f64 },
    /// The integrand is at most `c·e^{−λ(t−T)}` past the horizon, so the tail
    /// is at most `c/λ`.
    ExponentialBound { c: f64, lambda: f64 },
    /// Tail treated as zero; anything depending on it is horizon-limited.
    Truncate,
}

impl TailBound {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TailBound::ClosedForm { value } if !(value >= 0.0) || !value.is_finite() => {
                Err(invalid(format!("closed_form tail value must be finite and nonnegative, got {value}")))
            }
            TailBound::ExponentialBound { c, lambda } if !(c >= 0.0) || !(lambda > 0.0) || !c.is_finite() => {
                Err(invalid(format!(
                    "exponential_bound tail requires c >= 0 and lambda > 0, got c = {c}, lambda = {lambda}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Bound for the integrand multiplied by `s ≥ 0`.
    pub fn scaled(self, s: f64) -> Self {
        match self {
            TailBound::ClosedForm { value } => TailBound::ClosedForm { value: value * s },
            TailBound::ExponentialBound { c, lambda } => TailBound::ExponentialBound { c: c * s, lambda },
            TailBound::Truncate => TailBound::Truncate,
        }
    }

    /// Tail contribution and whether it is certified.
    pub fn contribution(&self) -> Result<(f64, bool)> {
        self.validate()?;
        Ok(match *self {
            TailBound::ClosedForm { value } => (value, true),
            TailBound::ExponentialBound { c, lambda } => (c / lambda, true),
            TailBound::Truncate => (0.0, false),
        })
    }
}

/// Assertion about `γ(t)` for `t` beyond the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaTail {
    /// `γ ≤ 0`: the running integral of `γ` cannot exceed its horizon value.
    NonPositive,
    /// `γ ≤ −λ < 0`: the running integral tends to `−∞` linearly.
    NegativeConstant { lambda: f64 },
    /// `γ(t) ≤ −c/(1+t)`: the running integral tends to `−∞` logarithmically.
    HarmonicDecay { c: f64 },
}

impl GammaTail {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GammaTail::NegativeConstant { lambda } if !(lambda > 0.0) => {
                Err(invalid("negative_constant gamma tail requires lambda > 0"))
            }
            GammaTail::HarmonicDecay { c } if !(c > 0.0) => Err(invalid("harmonic_decay gamma tail requires c > 0")),
            _ => Ok(()),
        }
    }

    /// `∫₀ᵗ γ → −∞` is implied.
    pub fn diverges_to_minus_infinity(&self) -> bool {
        !matches!(self, GammaTail::NonPositive)
    }
}

/// Everything a caller asserts about `[horizon, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    /// Tail of the kernel integral `∫ α σ^p / ν^{p−1}`.
    pub kernel: TailBound,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaTail>,
    /// Tail of `∫ β ν`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_nu: Option<TailBound>,
    /// Upper bound of `(β/α)^{1/p} ν(t−τ)` beyond the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_bound: Option<f64>,
    /// `β(t)/γ(t) → 0`.
    #[serde(default)]
    pub beta_over_gamma_vanishes: bool,
    /// The pointwise hypothesis being checked keeps holding past the horizon.
    #[serde(default)]
    pub pointwise_holds: bool,
}

impl Default for TailModel {
    fn default() -> Self {
        TailModel::truncate()
    }
}

impl TailModel {
    pub fn truncate() -> Self {
        TailModel {
            kernel: TailBound::Truncate,
            gamma: None,
            beta_nu: None,
            omega_bound: None,
            beta_over_gamma_vanishes: false,
            pointwise_holds: false,
        }
    }

    /// The same assertions for `α` scaled by `a` and `β` by `b`. The kernel
    /// tail is linear in `α`, the `βν` tail linear in `β`, and the omega bound
    /// scales as `(b/a)^{1/p}`. Qualitative flags are kept as asserted.
    pub fn scaled(&self, a: f64, b: f64, p: f64) -> Self {
        TailModel {
            kernel: self.kernel.scaled(a),
            beta_nu: self.beta_nu.map(|t| t.scaled(b)),
            omega_bound: self.omega_bound.map(|w| w * (b / a).powf(1.0 / p)),
            ..self.clone()
        }
    }

    pub fn with_kernel(kernel: TailBound) -> Self {
        TailModel {
            kernel,
            ..TailModel::truncate()
        }
    }

    pub fn gamma(mut self, g: GammaTail) -> Self {
        self.gamma = Some(g);
        self
    }

    pub fn beta_nu(mut self, b: TailBound) -> Self {
        self.beta_nu = Some(b);
        self
    }

    pub fn omega_bound(mut self, w: f64) -> Self {
        self.omega_bound = Some(w);
        self
    }

    pub fn beta_over_gamma_vanishes(mut self) -> Self {
        self.beta_over_gamma_vanishes = true;
        self
    }

    pub fn pointwise_holds(mut self) -> Self {
        self.pointwise_holds = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if let Some(g) = &self.gamma {
            g.validate()?;
        }
        if let Some(b) = &self.beta_nu {
            b.validate()?;
        }
        if let Some(w) = self.omega_bound {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(invalid("omega_bound must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contributions() {
        assert_eq!(TailBound::ClosedForm { value: 0.0 }.contribution().unwrap(), (0.0, true));
        assert_eq!(
            TailBound::ExponentialBound { c: 1.0, lambda: 2.0 }.contribution().unwrap(),
            (0.5, true)
        );
        assert_eq!(TailBound::Truncate.contribution().unwrap(), (0.0, false));
    }

    #[test]
    fn scaling_follows_the_coefficients() {
        let m = TailModel::with_kernel(TailBound::ExponentialBound { c: 1.0, lambda: 2.0 })
            .beta_nu(TailBound::ClosedForm { value: 3.0 })
            .omega_bound(1.0)
            .scaled(4.0, 2.0, 2.0);
        assert_eq!(m.kernel, TailBound::ExponentialBound { c: 4.0, lambda: 2.0 });
        assert_eq!(m.beta_nu, Some(TailBound::ClosedForm { value: 6.0 }));
        assert!((m.omega_bound.unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(TailBound::ExponentialBound { c: -1.0, lambda: 2.0 }.contribution().is_err());
        assert!(TailBound::ExponentialBound { c: 1.0, lambda: 0.0 }.contribution().is_err());
        assert!(TailBound::ClosedForm { value: f64::NAN }.contribution().is_err());
        assert!(GammaTail::NegativeConstant { lambda: -1.0 }.validate().is_err());
    }
}
