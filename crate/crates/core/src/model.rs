//! Problem data for `u̇ = A(t)u + G(t, u(t−τ)) + f(t)` with history `u = v` on
//! `[−τ, 0]`, together with the scalar majorants that drive every bound.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::linalg::{norm, Mat};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A real function of time, optionally carrying an exact antiderivative.
///
/// Functions built with [`ScalarFn::constant`] remember their value, which lets
/// the certificate code tell an identically-zero majorant apart from one that
/// merely vanishes on the sampled grid.
#[derive(Clone)]
pub struct ScalarFn {
    eval: Scalar,
    antiderivative: Option<Scalar>,
    constant: Option<f64>,
}

impl ScalarFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn {
            eval: Arc::new(f),
            antiderivative: None,
            constant: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        ScalarFn {
            eval: Arc::new(move |_| c),
            antiderivative: Some(Arc::new(move |t| c * t)),
            constant: Some(c),
        }
    }

    pub fn zero() -> Self {
        ScalarFn::constant(0.0)
    }

    /// Attach an exact antiderivative `F` with `F' = self`.
    pub fn with_antiderivative(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.antiderivative = Some(Arc::new(f));
        self
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn antiderivative(&self, t: f64) -> Option<f64> {
        self.antiderivative.as_ref().map(|f| f(t))
    }

    pub fn has_antiderivative(&self) -> bool {
        self.antiderivative.is_some()
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn is_identically_zero(&self) -> bool {
        self.constant == Some(0.0)
    }

    pub fn scaled(&self, s: f64) -> ScalarFn {
        if let Some(c) = self.constant {
            return ScalarFn::constant(s * c);
        }
        let f = self.eval.clone();
        let mut out = ScalarFn::new(move |t| s * f(t));
        if let Some(anti) = self.antiderivative.clone() {
            out.antiderivative = Some(Arc::new(move |t| s * anti(t)));
        }
        out
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constant {
            Some(c) => write!(f, "ScalarFn::constant({c})"),
            None => write!(f, "ScalarFn(antiderivative: {})", self.antiderivative.is_some()),
        }
    }
}

/// `t ↦ A(t)`, an `n × n` real matrix.
#[derive(Clone)]
pub struct MatrixFn {
    n: usize,
    eval: Arc<dyn Fn(f64) -> Mat + Send + Sync>,
    constant: Option<Mat>,
}

impl MatrixFn {
    pub fn new(n: usize, f: impl Fn(f64) -> Mat + Send + Sync + 'static) -> Self {
        MatrixFn {
            n,
            eval: Arc::new(f),
            constant: None,
        }
    }

    pub fn constant(m: Mat) -> Self {
        let n = m.dim();
        let c = m.clone();
        MatrixFn {
            n,
            eval: Arc::new(move |_| c.clone()),
            constant: Some(m),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, t: f64) -> Mat {
        match &self.constant {
            Some(m) => m.clone(),
            None => (self.eval)(t),
        }
    }

    pub fn as_constant(&self) -> Option<&Mat> {
        self.constant.as_ref()
    }

    /// `out = A(t) u`
    pub fn apply_into(&self, t: f64, u: &[f64], out: &mut [f64]) {
        match &self.constant {
            Some(m) => m.mul_vec_into(u, out),
            None => (self.eval)(t).mul_vec_into(u, out),
        }
    }
}

impl fmt::Debug for MatrixFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MatrixFn(n = {}, constant: {})", self.n, self.constant.is_some())
    }
}

/// `t ↦ x(t) ∈ ℝⁿ`; used for the forcing `f` and the history `v`.
#[derive(Clone)]
pub struct VectorFn {
    n: usize,
    eval: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    zero: bool,
}

impl VectorFn {
    pub fn new(n: usize, f: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        VectorFn {
            n,
            eval: Arc::new(f),
            zero: false,
        }
    }

    pub fn zero(n: usize) -> Self {
        VectorFn {
            n,
            eval: Arc::new(move |_| vec![0.0; n]),
            zero: true,
        }
    }

    pub fn constant(x: Vec<f64>) -> Self {
        let n = x.len();
        VectorFn::new(n, move |_| x.clone())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_identically_zero(&self) -> bool {
        self.zero
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        (self.eval)(t)
    }

    pub fn add_into(&self, t: f64, out: &mut [f64]) {
        if self.zero {
            return;
        }
        for (o, x) in out.iter_mut().zip((self.eval)(t)) {
            *o += x;
        }
    }
}

impl fmt::Debug for VectorFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorFn(n = {}, zero: {})", self.n, self.zero)
    }
}

/// Initial history `v` on `[−τ, 0]`.
#[derive(Clone, Debug)]
pub struct HistoryFn(pub VectorFn);

impl HistoryFn {
    pub fn new(v: VectorFn) -> Self {
        HistoryFn(v)
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.0.eval(t)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Sampled continuity check. On a uniform grid, a continuous function's
    /// largest adjacent jump shrinks when the grid is refined; a genuine jump
    /// discontinuity does not.
    pub fn check_continuity(&self, tau: f64, points: usize) -> Result<()> {
        let max_jump = |m: usize| -> Result<(f64, f64)> {
            let mut prev = self.eval(-tau);
            let mut worst = 0.0_f64;
            let mut worst_at = -tau;
            for k in 1..=m {
                let t = -tau + tau * k as f64 / m as f64;
                let cur = self.eval(t);
                if cur.len() != self.dim() || cur.iter().any(|x| !x.is_finite()) {
                    return Err(invalid(format!("history is not finite at t = {t}")));
                }
                let d: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| a - b).collect();
                let j = norm(&d);
                if j > worst {
                    worst = j;
                    worst_at = t;
                }
                prev = cur;
            }
            Ok((worst, worst_at))
        };
        let (coarse, at) = max_jump(points)?;
        let (fine, _) = max_jump(2 * points)?;
        let scale = 1.0 + norm(&self.eval(0.0));
        if coarse > 1e-8 * scale && fine > 0.9 * coarse {
            return Err(invalid(format!(
                "history appears discontinuous near t = {at} (jump {coarse:e} does not shrink under refinement)"
            )));
        }
        Ok(())
    }
}

/// The fixed nonlinearities shipped with the toolkit, plus a user-supplied map.
#[derive(Clone)]
pub enum Nonlinearity {
    Zero,
    /// `G(t,u) = α(t)‖u‖^{p−1} Q u` with `Q` orthogonal; attains equality in
    /// the growth bound.
    SharpPower { q: Mat },
    /// `G(t,u) = α(t)‖u‖^{p−1} u`
    SoftPower,
    Custom(Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => write!(f, "Zero"),
            Nonlinearity::SharpPower { .. } => write!(f, "SharpPower"),
            Nonlinearity::SoftPower => write!(f, "SoftPower"),
            Nonlinearity::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// `G(t, u)` with its declared exponent `p` and majorant `α`.
#[derive(Clone, Debug)]
pub struct NonlinearMap {
    n: usize,
    p: f64,
    alpha: ScalarFn,
    kind: Nonlinearity,
}

impl NonlinearMap {
    pub fn new(n: usize, p: f64, alpha: ScalarFn, kind: Nonlinearity) -> Result<Self> {
        if p.is_nan() || p <= 1.0 {
            return Err(invalid(format!("exponent p must satisfy p > 1, got {p}")));
        }
        if let Nonlinearity::SharpPower { q } = &kind {
            if q.dim() != n {
                return Err(invalid("sharp_power matrix Q has the wrong dimension"));
            }
            let qtq = q.transpose().mul(q);
            let id = Mat::identity(n);
            for i in 0..n {
                for j in 0..n {
                    if (qtq[(i, j)] - id[(i, j)]).abs() > 1e-12 {
                        return Err(invalid("sharp_power matrix Q is not orthogonal"));
                    }
                }
            }
        }
        Ok(NonlinearMap { n, p, alpha, kind })
    }

    pub fn zero(n: usize, p: f64) -> Result<Self> {
        NonlinearMap::new(n, p, ScalarFn::zero(), Nonlinearity::Zero)
    }

    /// Sharp power map with the default orthogonal factor of [`default_rotation`].
    pub fn sharp_power(n: usize, p: f64, alpha: ScalarFn) -> Result<Self> {
        NonlinearMap::new(n, p, alpha, Nonlinearity::SharpPower { q: default_rotation(n, std::f64::consts::FRAC_PI_3) })
    }

    pub fn soft_power(n: usize, p: f64, alpha: ScalarFn) -> Result<Self> {
        NonlinearMap::new(n, p, alpha, Nonlinearity::SoftPower)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> &ScalarFn {
        &self.alpha
    }

    pub fn kind(&self) -> &Nonlinearity {
        &self.kind
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, Nonlinearity::Zero)
    }

    pub fn eval(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.add_into(t, u, &mut out);
        out
    }

    /// `out += G(t, u)`
    pub fn add_into(&self, t: f64, u: &[f64], out: &mut [f64]) {
        match &self.kind {
            Nonlinearity::Zero => {}
            Nonlinearity::SharpPower { q } => {
                let r = norm(u);
                if r == 0.0 {
                    return;
                }
                let s = self.alpha.eval(t) * r.powf(self.p - 1.0);
                let qu = q.mul_vec(u);
                for (o, x) in out.iter_mut().zip(qu) {
                    *o += s * x;
                }
            }
            Nonlinearity::SoftPower => {
                let r = norm(u);
                if r == 0.0 {
                    return;
                }
                let s = self.alpha.eval(t) * r.powf(self.p - 1.0);
                for (o, x) in out.iter_mut().zip(u) {
                    *o += s * x;
                }
            }
            Nonlinearity::Custom(g) => {
                for (o, x) in out.iter_mut().zip(g(t, u)) {
                    *o += x;
                }
            }
        }
    }
}

/// Orthogonal matrix rotating consecutive coordinate planes `(0,1), (2,3), …`
/// by `angle`; a trailing odd coordinate is left fixed. For `n = 1` this is
/// `[1]`.
pub fn default_rotation(n: usize, angle: f64) -> Mat {
    let mut q = Mat::identity(n);
    let (s, c) = angle.sin_cos();
    let mut i = 0;
    while i + 1 < n {
        q[(i, i)] = c;
        q[(i, i + 1)] = -s;
        q[(i + 1, i)] = s;
        q[(i + 1, i + 1)] = c;
        i += 2;
    }
    q
}

/// Result of sampling `‖G(t,u)‖ / (α(t)‖u‖^p)`.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    #[serde(serialize_with = "crate::num::real")]
    pub max_ratio: f64,
    #[serde(serialize_with = "crate::num::real")]
    pub worst_t: f64,
    pub worst_u: Vec<f64>,
    pub violated: bool,
}

/// Samples `(t, u)` with `t` uniform in `t_range` and `u` uniform in the ball
/// of the given radius and records the largest ratio against the declared
/// majorant. Deterministic for a fixed seed.
pub fn verify_growth_majorant(
    g: &NonlinearMap,
    samples: usize,
    radius: f64,
    t_range: (f64, f64),
    seed: u64,
) -> Result<GrowthReport> {
    if samples == 0 {
        return Err(invalid("samples must be at least 1"));
    }
    if radius.is_nan() || radius <= 0.0 {
        return Err(invalid("radius must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.dim();
    let mut report = GrowthReport {
        max_ratio: 0.0,
        worst_t: t_range.0,
        worst_u: vec![0.0; n],
        violated: false,
    };
    for _ in 0..samples {
        let t = t_range.0 + (t_range.1 - t_range.0) * rng.random::<f64>();
        let mut u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&u);
        let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
        if len > 0.0 {
            u.iter_mut().for_each(|x| *x *= r / len);
        }
        let lhs = norm(&g.eval(t, &u));
        let rhs = g.alpha().eval(t) * norm(&u).powf(g.exponent());
        let ratio = if lhs == 0.0 {
            0.0
        } else if rhs <= 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        };
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst_t = t;
            report.worst_u = u;
        }
    }
    report.violated = report.max_ratio > 1.0 + 1e-12;
    Ok(report)
}

/// One instance of the delay problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub n: usize,
    pub tau: f64,
    pub p: f64,
    pub horizon: f64,
    pub a: MatrixFn,
    pub g: NonlinearMap,
    pub f: VectorFn,
    pub beta: ScalarFn,
    pub v: HistoryFn,
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        tau: f64,
        p: f64,
        horizon: f64,
        a: MatrixFn,
        g: NonlinearMap,
        f: VectorFn,
        beta: ScalarFn,
        v: HistoryFn,
    ) -> Result<Self> {
        let n = a.dim();
        check_delay_params(tau, p)?;
        if !(horizon > tau) || !horizon.is_finite() {
            return Err(invalid(format!("horizon must satisfy T > tau, got T = {horizon}, tau = {tau}")));
        }
        if n == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if g.dim() != n || f.dim() != n || v.dim() != n {
            return Err(invalid("A, G, f and v must share one dimension"));
        }
        if (g.exponent() - p).abs() > 0.0 {
            return Err(invalid("nonlinearity exponent differs from problem exponent"));
        }
        Ok(ProblemSpec {
            n,
            tau,
            p,
            horizon,
            a,
            g,
            f,
            beta,
            v,
        })
    }

    pub fn alpha(&self) -> &ScalarFn {
        self.g.alpha()
    }

    /// Checks `α ≥ 0`, `β ≥ 0` and `‖f(t)‖ ≤ β(t)` on a uniform grid of `[0, T]`.
    pub fn check_majorants(&self, points: usize) -> Result<()> {
        for k in 0..=points {
            let t = self.horizon * k as f64 / points as f64;
            let alpha = self.alpha().eval(t);
            let beta = self.beta.eval(t);
            if !(alpha >= 0.0) {
                return Err(invalid(format!("alpha({t}) = {alpha} is negative or not finite")));
            }
            if !(beta >= 0.0) {
                return Err(invalid(format!("beta({t}) = {beta} is negative or not finite")));
            }
            let fnorm = norm(&self.f.eval(t));
            if fnorm > beta * (1.0 + 1e-12) + 1e-300 {
                return Err(invalid(format!("|f({t})| = {fnorm} exceeds beta({t}) = {beta}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_delay_params(tau: f64, p: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(invalid(format!("delay must satisfy tau > 0, got {tau}")));
    }
    if !(p > 1.0) || !p.is_finite() {
        return Err(invalid(format!("exponent must satisfy p > 1, got {p}")));
    }
    Ok(())
}

/// The scalar data `(γ, α, β, p, τ, w)` of the comparison equation.
#[derive(Clone, Debug)]
pub struct BoundData {
    pub gamma: ScalarFn,
    pub alpha: ScalarFn,
    pub beta: ScalarFn,
    pub p: f64,
    pub tau: f64,
    /// History norm `w(t) = ‖v(t)‖` on `[−τ, 0]`.
    pub w: ScalarFn,
}

impl BoundData {
    pub fn new(gamma: ScalarFn, alpha: ScalarFn, beta: ScalarFn, p: f64, tau: f64, w: ScalarFn) -> Result<Self> {
        check_delay_params(tau, p)?;
        let bd = BoundData {
            gamma,
            alpha,
            beta,
            p,
            tau,
            w,
        };
        Ok(bd)
    }

    /// Builds the bound data of a problem given a majorant `γ` of its
    /// logarithmic norm.
    pub fn from_problem(ps: &ProblemSpec, gamma: ScalarFn) -> Result<Self> {
        let v = ps.v.clone();
        let w = ScalarFn::new(move |t| norm(&v.eval(t)));
        BoundData::new(gamma, ps.alpha().clone(), ps.beta.clone(), ps.p, ps.tau, w)
    }

    /// Checks nonnegativity of `α`, `β` on `[0, horizon]` and of `w` on `[−τ, 0]`.
    pub fn check_nonnegative(&self, horizon: f64, points: usize) -> Result<()> {
        for k in 0..=points {
            let t = horizon * k as f64 / points as f64;
            for (name, f) in [("alpha", &self.alpha), ("beta", &self.beta)] {
                let x = f.eval(t);
                if !(x >= 0.0) || !x.is_finite() {
                    return Err(invalid(format!("{name}({t}) = {x} must be finite and nonnegative")));
                }
            }
            let g = self.gamma.eval(t);
            if !g.is_finite() {
                return Err(invalid(format!("gamma({t}) is not finite")));
            }
            let s = -self.tau + self.tau * k as f64 / points as f64;
            let w = self.w.eval(s);
            if !(w >= 0.0) || !w.is_finite() {
                return Err(invalid(format!("w({s}) = {w} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    /// History norm, extended as `w(0)` to the right of zero.
    pub(crate) fn history(&self, t: f64) -> f64 {
        self.w.eval(t.min(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_has_zero_ratio() {
        let g = NonlinearMap::zero(3, 2.0).unwrap();
        let r = verify_growth_majorant(&g, 200, 2.0, (0.0, 5.0), 7).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        assert!(!r.violated);
    }

    #[test]
    fn sharp_power_attains_equality() {
        let alpha = ScalarFn::new(|t: f64| 0.5 + 0.25 * t.sin());
        for n in [1, 2, 3, 5] {
            let g = NonlinearMap::sharp_power(n, 2.5, alpha.clone()).unwrap();
            let r = verify_growth_majorant(&g, 500, 3.0, (0.0, 10.0), 11).unwrap();
            assert!((r.max_ratio - 1.0).abs() < 1e-12, "n = {n}: {}", r.max_ratio);
            assert!(!r.violated);
        }
    }

    #[test]
    fn factor_two_map_is_flagged() {
        let alpha = ScalarFn::constant(0.3);
        let a2 = alpha.clone();
        let p = 2.0;
        let custom = Nonlinearity::Custom(Arc::new(move |t, u: &[f64]| {
            let s = 2.0 * a2.eval(t) * norm(u).powf(p - 1.0);
            u.iter().map(|x| s * x).collect()
        }));
        let g = NonlinearMap::new(2, p, alpha, custom).unwrap();
        let r = verify_growth_majorant(&g, 100, 1.0, (0.0, 1.0), 3).unwrap();
        assert!(r.violated);
        assert!((r.max_ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_with_nonzero_map_is_violation() {
        let custom = Nonlinearity::Custom(Arc::new(|_, u: &[f64]| u.to_vec()));
        let g = NonlinearMap::new(1, 2.0, ScalarFn::zero(), custom).unwrap();
        let r = verify_growth_majorant(&g, 10, 1.0, (0.0, 1.0), 1).unwrap();
        assert!(r.violated);
        assert!(r.max_ratio.is_infinite());
    }

    #[test]
    fn growth_report_is_deterministic() {
        let g = NonlinearMap::soft_power(3, 3.0, ScalarFn::constant(1.0)).unwrap();
        let a = verify_growth_majorant(&g, 50, 1.0, (0.0, 1.0), 42).unwrap();
        let b = verify_growth_majorant(&g, 50, 1.0, (0.0, 1.0), 42).unwrap();
        assert_eq!(a.worst_u, b.worst_u);
        assert_eq!(a.worst_t, b.worst_t);
    }

    #[test]
    fn bad_exponent_or_delay_rejected() {
        assert!(NonlinearMap::zero(1, 1.0).is_err());
        assert!(BoundData::new(
            ScalarFn::zero(),
            ScalarFn::zero(),
            ScalarFn::zero(),
            2.0,
            0.0,
            ScalarFn::zero()
        )
        .is_err());
    }

    #[test]
    fn non_orthogonal_q_rejected() {
        let q = Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(NonlinearMap::new(2, 2.0, ScalarFn::constant(1.0), Nonlinearity::SharpPower { q }).is_err());
    }

    #[test]
    fn history_jump_detected() {
        let smooth = HistoryFn::new(VectorFn::new(1, |t| vec![(3.0 * t).cos()]));
        assert!(smooth.check_continuity(1.0, 400).is_ok());
        let jump = HistoryFn::new(VectorFn::new(1, |t| vec![if t < -0.5037 { 0.0 } else { 1.0 }]));
        assert!(jump.check_continuity(1.0, 400).is_err());
    }

    #[test]
    fn forcing_must_respect_beta() {
        let n = 1;
        let ps = ProblemSpec::new(
            1.0,
            2.0,
            5.0,
            MatrixFn::constant(Mat::identity(n)),
            NonlinearMap::zero(n, 2.0).unwrap(),
            VectorFn::constant(vec![2.0]),
            ScalarFn::constant(1.0),
            HistoryFn::new(VectorFn::constant(vec![0.0])),
        )
        .unwrap();
        assert!(ps.check_majorants(50).is_err());
    }
}
