//! The vector delay system `u̇ = A(t)u + G(t, u(t−τ)) + f(t)` and the
//! differential inequality obeyed by its norm.

use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Error, Result, SolveError};
use crate::linalg::norm;
use crate::model::{BoundData, HistoryFn, ProblemSpec};
use crate::steps::{self, DelayRhs, Dense, SolveStats, StepControl};

/// Dense solution of the vector system.
#[derive(Clone)]
pub struct VectorTrajectory {
    n: usize,
    tau: f64,
    history: HistoryFn,
    dense: Dense,
    breakpoints: Vec<f64>,
    blow_up: bool,
    stats: SolveStats,
}

impl fmt::Debug for VectorTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorTrajectory")
            .field("n", &self.n)
            .field("end_time", &self.end_time())
            .field("mesh_points", &self.dense.t.len())
            .field("blow_up", &self.blow_up)
            .finish()
    }
}

impl VectorTrajectory {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn end_time(&self) -> f64 {
        self.dense.end()
    }

    pub fn blow_up(&self) -> bool {
        self.blow_up
    }

    pub fn stats(&self) -> SolveStats {
        self.stats
    }

    pub fn mesh(&self) -> &[f64] {
        &self.dense.t
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `u(t)` for `t ∈ [−τ, end]`; the history itself on `[−τ, 0)`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if t < -self.tau || t > self.end_time() || t.is_nan() {
            return Err(Error::Domain(format!(
                "t = {t} outside the computed interval [{}, {}]",
                -self.tau,
                self.end_time()
            )));
        }
        if t < 0.0 {
            return Ok(self.history.eval(t));
        }
        let mut out = vec![0.0; self.n];
        self.dense.eval_into(t, &mut out);
        Ok(out)
    }

    pub fn norm_at(&self, t: f64) -> Result<f64> {
        Ok(norm(&self.eval(t)?))
    }
}

struct SystemRhs<'a> {
    ps: &'a ProblemSpec,
}

impl DelayRhs for SystemRhs<'_> {
    fn dim(&self) -> usize {
        self.ps.n
    }

    fn history(&self, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.ps.v.eval(t));
    }

    fn eval(&self, t: f64, y: &[f64], delayed: &[f64], out: &mut [f64]) {
        self.ps.a.apply_into(t, y, out);
        self.ps.g.add_into(t, delayed, out);
        self.ps.f.add_into(t, out);
    }
}

/// Integrates the system on `[0, ps.horizon]` by the method of steps.
pub fn solve_system(ps: &ProblemSpec, ctrl: &StepControl) -> Result<VectorTrajectory> {
    ctrl.validate()?;
    let v0 = ps.v.eval(0.0);
    if v0.len() != ps.n || v0.iter().any(|x| !x.is_finite()) {
        return Err(invalid("history v(0) must be finite and of the problem dimension"));
    }
    let o = steps::run(&SystemRhs { ps }, ps.tau, ps.horizon, ctrl, false);
    let traj = VectorTrajectory {
        n: ps.n,
        tau: ps.tau,
        history: ps.v.clone(),
        dense: o.dense,
        breakpoints: o.breakpoints,
        blow_up: o.blow_up,
        stats: o.stats,
    };
    match o.underflow_at {
        Some(t) => Err(SolveError::VectorUnderflow {
            t,
            partial: Box::new(traj),
        }
        .into()),
        None => Ok(traj),
    }
}

/// `g(tᵢ) = ‖u(tᵢ)‖` on a grid.
pub fn norm_curve(traj: &VectorTrajectory, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter().map(|&t| traj.norm_at(t)).collect()
}

/// Result of checking `D⁺g ≤ γg + αg^p(t−τ) + β` along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Largest excess beyond the tolerance and the `O(δ)` allowance; 0 when
    /// the inequality holds everywhere.
    #[serde(serialize_with = "crate::num::real")]
    pub max_violation: f64,
    #[serde(serialize_with = "crate::num::real")]
    pub location: f64,
    /// Largest raw excess `D⁺g − (γg + αg^p(t−τ) + β)`, before any allowance.
    #[serde(serialize_with = "crate::num::real")]
    pub max_excess: f64,
    #[serde(serialize_with = "crate::num::real")]
    pub excess_location: f64,
    pub checked: usize,
    /// Points skipped because `g ≤ 10⁻¹⁰`.
    pub skipped: usize,
}

const ZERO_NORM: f64 = 1e-10;

/// Forward-difference check of the norm inequality at each grid point `t`
/// with `t + 2δ` inside the trajectory.
///
/// The discretization allowance is `(δ/2)|ĝ''|` with `ĝ''` the second forward
/// difference, i.e. the leading error term of `D⁺g` itself.
pub fn residual_check(traj: &VectorTrajectory, bd: &BoundData, grid: &[f64], delta: f64, tol: f64) -> Result<ResidualReport> {
    if !(delta > 0.0) || !(tol >= 0.0) {
        return Err(invalid("residual check needs delta > 0 and tol >= 0"));
    }
    let mut r = ResidualReport {
        max_violation: 0.0,
        location: f64::NAN,
        max_excess: f64::NEG_INFINITY,
        excess_location: f64::NAN,
        checked: 0,
        skipped: 0,
    };
    let end = traj.end_time();
    for &t in grid {
        if t < 0.0 || t + 2.0 * delta > end {
            continue;
        }
        let g0 = traj.norm_at(t)?;
        if g0 <= ZERO_NORM {
            r.skipped += 1;
            continue;
        }
        let g1 = traj.norm_at(t + delta)?;
        let g2 = traj.norm_at(t + 2.0 * delta)?;
        let gd = traj.norm_at(t - bd.tau)?;
        let d_plus = (g1 - g0) / delta;
        let second = (g2 - 2.0 * g1 + g0) / (delta * delta);
        let a = bd.alpha.eval(t);
        let push = if a == 0.0 { 0.0 } else { a * gd.powf(bd.p) };
        let rhs = bd.gamma.eval(t) * g0 + push + bd.beta.eval(t);
        let excess = d_plus - rhs;
        if excess > r.max_excess {
            r.max_excess = excess;
            r.excess_location = t;
        }
        let violation = excess - tol * (1.0 + g0) - 0.5 * delta * second.abs();
        if violation > r.max_violation {
            r.max_violation = violation;
            r.location = t;
        }
        r.checked += 1;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::model::{MatrixFn, NonlinearMap, ScalarFn, VectorFn};

    fn spec(a: Mat, g: NonlinearMap, v: Vec<f64>, horizon: f64) -> ProblemSpec {
        let n = v.len();
        ProblemSpec::new(
            1.0,
            2.0,
            horizon,
            MatrixFn::constant(a),
            g,
            VectorFn::zero(n),
            ScalarFn::zero(),
            HistoryFn::new(VectorFn::constant(v)),
        )
        .unwrap()
    }

    #[test]
    fn linear_decay() {
        let ps = spec(
            Mat::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap(),
            NonlinearMap::zero(2, 2.0).unwrap(),
            vec![1.0, 0.0],
            10.0,
        );
        let u = solve_system(&ps, &StepControl::default()).unwrap();
        for k in 0..=200 {
            let t = 0.05 * k as f64;
            let x = u.eval(t).unwrap();
            assert!((x[0] - (-t).exp()).abs() < 1e-8);
            assert!(x[1].abs() < 1e-15);
        }
        let bd = BoundData::from_problem(&ps, ScalarFn::constant(-1.0)).unwrap();
        let grid: Vec<f64> = (0..990).map(|k| 0.01 * k as f64).collect();
        let r = residual_check(&u, &bd, &grid, 1e-4, 0.0).unwrap();
        assert!(r.max_violation <= 1e-6, "{r:?}");
    }

    #[test]
    fn scalar_equality_case() {
        let g = NonlinearMap::sharp_power(1, 2.0, ScalarFn::constant(1.0)).unwrap();
        let ps = spec(Mat::zeros(1), g, vec![1.0], 2.0);
        let u = solve_system(&ps, &StepControl::default()).unwrap();
        assert!((u.eval(2.0).unwrap()[0] - 13.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn rotation_keeps_norm() {
        let ps = spec(
            Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap(),
            NonlinearMap::zero(2, 2.0).unwrap(),
            vec![0.6, 0.8],
            10.0,
        );
        let u = solve_system(&ps, &StepControl::default()).unwrap();
        let grid: Vec<f64> = (0..=100).map(|k| 0.1 * k as f64).collect();
        for g in norm_curve(&u, &grid).unwrap() {
            assert!((g - 1.0).abs() < 1e-8);
        }
        let bd = BoundData::from_problem(&ps, ScalarFn::zero()).unwrap();
        let r = residual_check(&u, &bd, &grid[..99], 1e-4, 1e-6).unwrap();
        assert_eq!(r.max_violation, 0.0);
    }

    #[test]
    fn zero_trajectory() {
        let ps = spec(Mat::identity(3), NonlinearMap::zero(3, 2.0).unwrap(), vec![0.0; 3], 3.0);
        let u = solve_system(&ps, &StepControl::default()).unwrap();
        let grid = [0.0, 1.0, 2.5];
        assert_eq!(norm_curve(&u, &grid).unwrap(), vec![0.0; 3]);
        assert!(norm_curve(&u, &[4.0]).is_err());
        let bd = BoundData::from_problem(&ps, ScalarFn::constant(1.0)).unwrap();
        let r = residual_check(&u, &bd, &grid, 1e-3, 0.0).unwrap();
        assert_eq!(r.skipped, 3);
    }

    #[test]
    fn history_is_delegated() {
        let v = HistoryFn::new(VectorFn::new(2, |t| vec![t.cos(), t]));
        let ps = ProblemSpec::new(
            1.0,
            2.0,
            2.0,
            MatrixFn::constant(Mat::zeros(2)),
            NonlinearMap::zero(2, 2.0).unwrap(),
            VectorFn::zero(2),
            ScalarFn::zero(),
            v,
        )
        .unwrap();
        let u = solve_system(&ps, &StepControl::default()).unwrap();
        assert_eq!(u.eval(-0.3).unwrap(), vec![(-0.3f64).cos(), -0.3]);
    }
}
