//! Method-of-steps driver: Dormand–Prince 5(4) with cubic Hermite dense
//! output, restarted at every multiple of the delay.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub(crate) const BLOW_UP: f64 = 1e150;
const UNDERFLOW: f64 = 1e-14;

/// Step-size control for both solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// First step of every segment; chosen automatically when absent.
    #[serde(default)]
    pub initial_step: Option<f64>,
    /// Defaults to the delay.
    #[serde(default)]
    pub max_step: Option<f64>,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: 1e-9,
            atol: 1e-12,
            initial_step: None,
            max_step: None,
        }
    }
}

impl StepControl {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        StepControl {
            rtol,
            atol,
            ..StepControl::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return Err(invalid("step control tolerances must be positive"));
        }
        for (name, v) in [("initial_step", self.initial_step), ("max_step", self.max_step)] {
            if let Some(h) = v {
                if !(h > 0.0) || !h.is_finite() {
                    return Err(invalid(format!("{name} must be positive and finite")));
                }
            }
        }
        Ok(())
    }
}

/// Right-hand side of `y' = F(t, y, y(t−τ))` together with its history.
pub(crate) trait DelayRhs {
    fn dim(&self) -> usize;
    fn history(&self, t: f64, out: &mut [f64]);
    fn eval(&self, t: f64, y: &[f64], delayed: &[f64], out: &mut [f64]);
}

/// Accepted mesh with values and derivatives; piecewise cubic Hermite.
#[derive(Debug, Clone, Default)]
pub(crate) struct Dense {
    n: usize,
    pub(crate) t: Vec<f64>,
    y: Vec<f64>,
    dy: Vec<f64>,
}

impl Dense {
    fn new(n: usize) -> Self {
        Dense {
            n,
            ..Dense::default()
        }
    }

    fn push(&mut self, t: f64, y: &[f64], dy: &[f64]) {
        self.t.push(t);
        self.y.extend_from_slice(y);
        self.dy.extend_from_slice(dy);
    }

    pub(crate) fn end(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }

    pub(crate) fn node(&self, k: usize) -> &[f64] {
        &self.y[k * self.n..(k + 1) * self.n]
    }

    fn bracket(&self, t: f64) -> usize {
        let idx = self.t.partition_point(|&x| x <= t);
        idx.clamp(1, self.t.len() - 1) - 1
    }

    /// Interpolated value; `t` must lie in `[t₀, end]`.
    pub(crate) fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.n;
        if self.t.len() == 1 {
            out.copy_from_slice(&self.y[..n]);
            return;
        }
        let k = self.bracket(t);
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        if s == 0.0 {
            out.copy_from_slice(self.node(k));
            return;
        }
        if s == 1.0 {
            out.copy_from_slice(self.node(k + 1));
            return;
        }
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for i in 0..n {
            let (y0, y1) = (self.y[k * n + i], self.y[(k + 1) * n + i]);
            let (f0, f1) = (self.dy[k * n + i], self.dy[(k + 1) * n + i]);
            out[i] = h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1;
        }
    }

    /// Derivative of the interpolant.
    pub(crate) fn derivative_into(&self, t: f64, out: &mut [f64]) {
        let n = self.n;
        if self.t.len() == 1 {
            out.copy_from_slice(&self.dy[..n]);
            return;
        }
        let k = self.bracket(t);
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        for i in 0..n {
            let (y0, y1) = (self.y[k * n + i], self.y[(k + 1) * n + i]);
            let (f0, f1) = (self.dy[k * n + i], self.dy[(k + 1) * n + i]);
            out[i] = d00 * y0 + d10 * f0 + d01 * y1 + d11 * f1;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

pub(crate) struct Outcome {
    pub dense: Dense,
    pub breakpoints: Vec<f64>,
    pub blow_up: bool,
    pub clamp_count: usize,
    pub underflow_at: Option<f64>,
    pub stats: SolveStats,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Quartic term of the continuous extension; the cubic part is exactly the
// Hermite interpolant, so this term measures the interpolation defect.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];
// Fifth-order weights minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper<'a, R: DelayRhs> {
    rhs: &'a R,
    tau: f64,
    dense: Dense,
    delayed: Vec<f64>,
    evals: usize,
}

impl<R: DelayRhs> Stepper<'_, R> {
    fn f(&mut self, t: f64, y: &[f64], out: &mut [f64]) {
        let s = t - self.tau;
        if s <= 0.0 {
            self.rhs.history(s, &mut self.delayed);
        } else {
            self.dense.eval_into(s.min(self.dense.end()), &mut self.delayed);
        }
        self.rhs.eval(t, y, &self.delayed, out);
        self.evals += 1;
    }
}

fn max_abs(y: &[f64]) -> f64 {
    y.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn all_finite(y: &[f64]) -> bool {
    y.iter().all(|x| x.is_finite())
}

/// Integrates from 0 to `horizon`. Never fails: step underflow is reported in
/// the outcome alongside everything accepted so far.
pub(crate) fn run<R: DelayRhs>(rhs: &R, tau: f64, horizon: f64, ctrl: &StepControl, clamp: bool) -> Outcome {
    let n = rhs.dim();
    let mut st = Stepper {
        rhs,
        tau,
        dense: Dense::new(n),
        delayed: vec![0.0; n],
        evals: 0,
    };
    let mut stats = SolveStats::default();
    let mut clamp_count = 0;
    let mut breakpoints = vec![0.0];

    let mut y = vec![0.0; n];
    rhs.history(0.0, &mut y);
    let mut k = vec![vec![0.0; n]; 7];
    let mut k0 = vec![0.0; n];
    st.f(0.0, &y, &mut k0);
    st.dense.push(0.0, &y, &k0);

    let max_step = ctrl.max_step.unwrap_or(tau).min(tau);
    let floor = UNDERFLOW * tau;
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut t = 0.0;
    let mut seg = 0usize;
    let mut blow_up = false;
    let mut underflow_at = None;

    'segments: while t < horizon {
        seg += 1;
        let seg_end = (seg as f64 * tau).min(horizon);
        // Fresh start at every breaking point.
        let mut h = match ctrl.initial_step {
            Some(h0) => h0,
            None => initial_step(&y, &k0, ctrl, seg_end - t),
        }
        .min(max_step)
        .min(seg_end - t);

        while t < seg_end {
            let last = seg_end - t <= h * (1.0 + 1e-12);
            if last {
                h = seg_end - t;
            }
            k[0].copy_from_slice(&k0);
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    ytmp[i] = y[i] + h * acc;
                }
                let ts = if s >= 5 && last { seg_end } else { t + C[s] * h };
                st.f(ts, &ytmp, &mut k[s]);
            }
            // Stage 7 is evaluated at the fifth-order solution (FSAL).
            ynew.copy_from_slice(&ytmp);
            // Step error and Hermite defect at the midpoint, both scaled.
            let (mut err, mut defect) = (0.0, 0.0);
            for i in 0..n {
                let (mut e, mut d) = (0.0, 0.0);
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                    d += D[j] * kj[i];
                }
                let sc = ctrl.atol + ctrl.rtol * y[i].abs().max(ynew[i].abs());
                err += (h * e / sc).powi(2);
                defect += (h * d / 16.0 / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            let defect = (defect / n as f64).sqrt();
            let fac = (0.9 * err.powf(-0.2)).min(0.9 * defect.powf(-0.25));
            let err = err.max(defect);

            if !err.is_finite() || !all_finite(&ynew) {
                if max_abs(&y) > BLOW_UP.sqrt() {
                    blow_up = true;
                    break 'segments;
                }
                stats.rejected += 1;
                h *= 0.25;
                if h < floor {
                    underflow_at = Some(t);
                    break 'segments;
                }
                continue;
            }

            if err <= 1.0 {
                let t_new = if last { seg_end } else { t + h };
                let mut clamped = false;
                if clamp {
                    for x in ynew.iter_mut() {
                        if *x < 0.0 {
                            *x = 0.0;
                            clamped = true;
                        }
                    }
                }
                if clamped {
                    clamp_count += 1;
                    st.f(t_new, &ynew, &mut k0);
                } else {
                    k0.copy_from_slice(&k[6]);
                }
                t = t_new;
                y.copy_from_slice(&ynew);
                st.dense.push(t, &y, &k0);
                stats.accepted += 1;
                if max_abs(&y) > BLOW_UP {
                    blow_up = true;
                    break 'segments;
                }
                h = (h * fac.clamp(0.2, 5.0)).min(max_step);
            } else {
                stats.rejected += 1;
                h *= fac.clamp(0.1, 0.9);
                if h < floor {
                    underflow_at = Some(t);
                    break 'segments;
                }
            }
        }
        breakpoints.push(seg_end);
    }
    stats.rhs_evals = st.evals;
    Outcome {
        dense: st.dense,
        breakpoints,
        blow_up,
        clamp_count,
        underflow_at,
        stats,
    }
}

/// Starting step from the size of the state and its slope.
fn initial_step(y: &[f64], dy: &[f64], ctrl: &StepControl, span: f64) -> f64 {
    let n = y.len() as f64;
    let (mut d0, mut d1) = (0.0, 0.0);
    for (a, b) in y.iter().zip(dy) {
        let sc = ctrl.atol + ctrl.rtol * a.abs();
        d0 += (a / sc).powi(2);
        d1 += (b / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.clamp(1e-6 * span, span)
}
