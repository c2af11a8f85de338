//! Globally adaptive Gauss–Kronrod (7/15) quadrature with panel bisection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ScalarFn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_depth: 40,
        }
    }
}

impl QuadratureSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(invalid("quadrature tolerances must be positive"));
        }
        if self.max_depth < 1 {
            return Err(invalid("quadrature depth must be at least 1"));
        }
        Ok(())
    }
}

/// A quadrature value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

impl Integral {
    pub const ZERO: Integral = Integral {
        value: 0.0,
        error: 0.0,
    };
}

impl std::ops::Add for Integral {
    type Output = Integral;
    fn add(self, rhs: Integral) -> Integral {
        Integral {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
        }
    }
}

// Positive Kronrod abscissae, descending from the endpoint; odd indices are
// the Gauss nodes.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One G7/K15 panel: Kronrod value and a QUADPACK-style error estimate.
pub(crate) fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> Result<Integral> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = checked(f, center)?;
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = resk.abs();
    let mut fv = [(0.0, 0.0); 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = checked(f, center - dx)?;
        let f2 = checked(f, center + dx)?;
        fv[j] = (f1, f2);
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j].0 - mean).abs() + (fv[j].1 - mean).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let roundoff = 50.0 * f64::EPSILON * resabs;
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(roundoff);
    }
    Ok(Integral { value, error: err })
}

fn checked(f: &mut impl FnMut(f64) -> f64, t: f64) -> Result<f64> {
    let y = f(t);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::Domain(format!("integrand is not finite at t = {t}")))
    }
}

struct Panel {
    a: f64,
    b: f64,
    est: Integral,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est
            .error
            .total_cmp(&other.est.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol·|value|)`.
///
/// `b < a` integrates backwards. Fails with [`Error::Accuracy`] (carrying the
/// best estimate) when a panel needing refinement is already at the maximum
/// depth.
pub fn integrate_with(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    settings: &QuadratureSettings,
) -> Result<Integral> {
    if !a.is_finite() || !b.is_finite() {
        return Err(invalid("integration limits must be finite"));
    }
    if a == b {
        return Ok(Integral::ZERO);
    }
    if b < a {
        let r = integrate_with(f, b, a, settings)?;
        return Ok(Integral {
            value: -r.value,
            error: r.error,
        });
    }
    let first = gk15(&mut f, a, b)?;
    let mut total = first;
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        est: first,
        depth: 0,
    });
    loop {
        let tol = settings.abs_tol.max(settings.rel_tol * total.value.abs());
        if total.error <= tol {
            break;
        }
        let worst = heap.pop().expect("panel heap is never empty");
        if worst.depth >= settings.max_depth {
            return Err(Error::Accuracy {
                a,
                b,
                estimate: total.value,
                error: total.error,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(&mut f, worst.a, mid)?;
        let right = gk15(&mut f, mid, worst.b)?;
        total.value += left.value + right.value - worst.est.value;
        total.error += left.error + right.error - worst.est.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            est: left,
            depth: worst.depth + 1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            est: right,
            depth: worst.depth + 1,
        });
    }
    // Re-sum in position order so the result does not depend on update history.
    let mut panels = heap.into_vec();
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = panels.iter().map(|p| p.est.value).sum();
    let error = panels.iter().map(|p| p.est.error).sum();
    Ok(Integral { value, error })
}

/// Integrates a [`ScalarFn`], using its exact antiderivative when it has one.
pub fn integrate(f: &ScalarFn, a: f64, b: f64, settings: &QuadratureSettings) -> Result<Integral> {
    if a > b {
        return Err(invalid(format!("integration requires a <= b, got [{a}, {b}]")));
    }
    if let (Some(fa), Some(fb)) = (f.antiderivative(a), f.antiderivative(b)) {
        return Ok(Integral {
            value: fb - fa,
            error: 0.0,
        });
    }
    integrate_with(|t| f.eval(t), a, b, settings)
}

/// Cached running integral `Γ(t) = ∫₀ᵗ f` on a fixed panel grid.
///
/// Values at panel boundaries are computed once; a query adds the integral
/// from the nearest boundary on the left. Each instance is owned by one
/// evaluation context.
#[derive(Clone, Debug)]
pub struct Primitive {
    f: ScalarFn,
    step: f64,
    knots: Vec<f64>,
    errors: Vec<f64>,
    settings: QuadratureSettings,
}

impl Primitive {
    pub fn new(f: ScalarFn, upper: f64, step: f64, settings: QuadratureSettings) -> Result<Self> {
        if !(step > 0.0) {
            return Err(invalid("primitive panel step must be positive"));
        }
        let count = (upper.max(0.0) / step).ceil() as usize;
        let mut knots = Vec::with_capacity(count + 1);
        let mut errors = Vec::with_capacity(count + 1);
        knots.push(0.0);
        errors.push(0.0);
        if !f.has_antiderivative() {
            let mut acc = Integral::ZERO;
            for k in 0..count {
                let piece = integrate(&f, k as f64 * step, (k + 1) as f64 * step, &settings)?;
                acc = acc + piece;
                knots.push(acc.value);
                errors.push(acc.error);
            }
        }
        Ok(Primitive {
            f,
            step,
            knots,
            errors,
            settings,
        })
    }

    /// `∫₀ᵗ f` with its error estimate.
    pub fn integral(&self, t: f64) -> Result<Integral> {
        if let (Some(ft), Some(f0)) = (self.f.antiderivative(t), self.f.antiderivative(0.0)) {
            return Ok(Integral {
                value: ft - f0,
                error: 0.0,
            });
        }
        if t < 0.0 {
            let r = integrate(&self.f, t, 0.0, &self.settings)?;
            return Ok(Integral {
                value: -r.value,
                error: r.error,
            });
        }
        let k = ((t / self.step).floor() as usize).min(self.knots.len() - 1);
        let start = k as f64 * self.step;
        let base = Integral {
            value: self.knots[k],
            error: self.errors[k],
        };
        if t == start {
            return Ok(base);
        }
        Ok(base + integrate(&self.f, start, t, &self.settings)?)
    }

    /// Same as [`Primitive::integral`], falling back to the best available
    /// estimate when refinement fails. Used inside integrands.
    pub(crate) fn value(&self, t: f64) -> f64 {
        match self.integral(t) {
            Ok(r) => r.value,
            Err(Error::Accuracy { estimate, .. }) => estimate,
            Err(_) => f64::NAN,
        }
    }
}
