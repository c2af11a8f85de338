//! The four runs behind the command line. Every output file is written to a
//! temporary name and renamed into place, so readers never see a partial file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use delaybound::{
    check_corollary1, check_mu_certificate, check_theorem1, check_theorem2, linear_certificate, solve_comparison,
    solve_system, uniform_grid, BoundContext, Certificate, Envelope, Error as CoreError, ScalarTrajectory, SolveError,
    TailModel, VectorTrajectory,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::load::{load_value, Overrides, Scenario, ScenarioError, SweepParam, TheoremChoice};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exit {
    Success = 0,
    Failure = 1,
    NotEstablished = 2,
    Numerical = 3,
    Invalid = 4,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit(&self) -> Exit {
        match self {
            RunError::Scenario(_) => Exit::Invalid,
            RunError::Core(CoreError::InvalidInput(_)) => Exit::Invalid,
            RunError::Core(CoreError::Inapplicable { .. }) => Exit::NotEstablished,
            RunError::Core(_) => Exit::Numerical,
            RunError::Io { .. } => Exit::Failure,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = dir.join(format!(".{name}.tmp"));
    let dest = dir.join(name);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, &dest).map_err(io_err(&dest))?;
    Ok(dest)
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn tail_of(s: &Scenario) -> TailModel {
    s.certificate.as_ref().map(|c| c.tail.clone()).unwrap_or_default()
}

/// Solutions of the system and of the comparison equation, keeping partial
/// results when a solver gives up.
pub struct Solutions {
    pub u: VectorTrajectory,
    pub h: ScalarTrajectory,
    pub status: Vec<String>,
    pub numerical_failure: bool,
}

pub fn solve(s: &Scenario) -> Result<Solutions, RunError> {
    let mut status = Vec::new();
    let mut failure = false;
    let u = match solve_system(&s.problem, &s.control) {
        Ok(u) => u,
        Err(CoreError::Solve(SolveError::VectorUnderflow { t, partial })) => {
            status.push(format!("system step underflow at t = {}; partial output", num(t)));
            failure = true;
            *partial
        }
        Err(e) => return Err(e.into()),
    };
    if u.blow_up() {
        status.push(format!("system blow-up at t = {}", num(u.end_time())));
        failure = true;
    }
    let h = match solve_comparison(&s.bounds, s.horizon(), &s.control) {
        Ok(h) => h,
        Err(CoreError::Solve(SolveError::ScalarUnderflow { t, partial })) => {
            status.push(format!("comparison step underflow at t = {}; partial output", num(t)));
            failure = true;
            *partial
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(tb) = h.blow_up_time() {
        status.push(format!("comparison blow-up at T = {}", num(tb)));
        failure = true;
    }
    if status.is_empty() {
        status.push("ok".into());
    }
    Ok(Solutions {
        u,
        h,
        status,
        numerical_failure: failure,
    })
}

fn envelope_t1(s: &Scenario, tail: &TailModel) -> Envelope {
    let horizon = s.horizon();
    match check_theorem1(&s.bounds, horizon, tail, &s.check) {
        Ok(c) => c.envelope,
        Err(CoreError::Inapplicable { .. }) => linear_certificate(&s.bounds, horizon, tail, &s.check)
            .map(|c| c.envelope)
            .unwrap_or_default(),
        Err(_) => Envelope::None,
    }
}

fn envelope_t2(s: &Scenario, tail: &TailModel) -> Envelope {
    let q = match s.certificate.as_ref().map(|c| &c.theorem) {
        Some(TheoremChoice::T2 { q }) => *q,
        _ => 2.0,
    };
    check_theorem2(&s.bounds, q, s.horizon(), tail, &s.check)
        .map(|c| c.envelope)
        .unwrap_or_default()
}

pub struct SimulateReport {
    pub status: Vec<String>,
    pub exit: Exit,
    pub rows: usize,
}

/// `trajectory.csv` with columns `t,g,h,env_t1,env_t2,nu,sigma`, plus
/// `status.txt`.
pub fn simulate(s: &Scenario, out: &Path) -> Result<SimulateReport, RunError> {
    let sol = solve(s)?;
    let tail = tail_of(s);
    let grid = uniform_grid(0.0, s.horizon(), s.output_step);
    let e1 = envelope_t1(s, &tail).on_grid(&grid)?;
    let e2 = envelope_t2(s, &tail).on_grid(&grid)?;
    let ctx = BoundContext::new(&s.bounds, s.horizon(), s.check.quadrature)?;
    let tau = s.tau();

    let mut csv = String::from("t,g,h,env_t1,env_t2,nu,sigma\n");
    for (i, &t) in grid.iter().enumerate() {
        let g = (t <= sol.u.end_time()).then(|| sol.u.norm_at(t)).transpose()?;
        let h = (t <= sol.h.end_time()).then(|| sol.h.eval(t)).transpose()?;
        let sigma = (t >= tau).then(|| ctx.sigma(t)).transpose()?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            num(t),
            opt_num(g),
            opt_num(h),
            opt_num(e1[i]),
            opt_num(e2[i]),
            num(ctx.nu(t)?),
            opt_num(sigma)
        );
    }
    write_atomic(out, "trajectory.csv", csv.as_bytes())?;
    let mut status = sol.status.join("\n");
    status.push('\n');
    write_atomic(out, "status.txt", status.as_bytes())?;
    Ok(SimulateReport {
        status: sol.status,
        exit: if sol.numerical_failure { Exit::Numerical } else { Exit::Success },
        rows: grid.len(),
    })
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub scenario: String,
    pub theorem: &'static str,
    /// `certified`, `horizon_limited`, `not_established` or `inapplicable`.
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub certificate: Option<Certificate>,
}

impl Report {
    pub fn exit(&self) -> Exit {
        if self.status == "certified" {
            Exit::Success
        } else {
            Exit::NotEstablished
        }
    }
}

/// Runs the scenario's certificate check without touching the filesystem.
pub fn certificate_report(s: &Scenario) -> Result<Report, RunError> {
    let Some(spec) = &s.certificate else {
        return Err(ScenarioError {
            errors: vec![crate::load::FieldError {
                path: "certificate".into(),
                msg: "required for certify".into(),
            }],
        }
        .into());
    };
    let (bd, horizon, opts, tail) = (&s.bounds, s.horizon(), &s.check, &spec.tail);
    let result = match &spec.theorem {
        TheoremChoice::T1 => match check_theorem1(bd, horizon, tail, opts) {
            Err(CoreError::Inapplicable { .. }) if bd.alpha.is_identically_zero() => {
                linear_certificate(bd, horizon, tail, opts)
            }
            r => r,
        },
        TheoremChoice::T2 { q } => check_theorem2(bd, *q, horizon, tail, opts),
        TheoremChoice::C1 => check_corollary1(bd, horizon, tail, opts),
        TheoremChoice::Mu { mu, mu_dot } => check_mu_certificate(mu, mu_dot.as_ref(), bd, horizon, tail, opts),
    };
    let theorem = spec.theorem.label();
    match result {
        Ok(cert) => {
            let status = match cert.global_existence {
                v if v.is_certified() => "certified",
                v if v.holds() => "horizon_limited",
                _ => "not_established",
            };
            Ok(Report {
                scenario: s.name.clone(),
                theorem,
                status,
                reason: None,
                certificate: Some(cert),
            })
        }
        Err(e @ CoreError::Inapplicable { .. }) => Ok(Report {
            scenario: s.name.clone(),
            theorem,
            status: "inapplicable",
            reason: Some(e.to_string()),
            certificate: None,
        }),
        Err(e) => Err(e.into()),
    }
}

fn report_json(r: &Report) -> String {
    let mut text = serde_json::to_string_pretty(r).expect("report serializes");
    text.push('\n');
    text
}

/// Writes `report.json`.
pub fn certify(s: &Scenario, out: &Path) -> Result<Report, RunError> {
    let r = certificate_report(s)?;
    write_atomic(out, "report.json", report_json(&r).as_bytes())?;
    Ok(r)
}

struct Row {
    values: Vec<f64>,
    certified: bool,
    verdict: String,
    slack: Option<f64>,
    sup_g: Option<f64>,
    sup_h: Option<f64>,
    error: Option<String>,
}

fn sup_on(grid: &[f64], end: f64, mut f: impl FnMut(f64) -> delaybound::Result<f64>, blow_up: bool) -> Option<f64> {
    if blow_up {
        return Some(f64::INFINITY);
    }
    let mut m: f64 = 0.0;
    for &t in grid.iter().filter(|&&t| t <= end) {
        m = m.max(f(t).ok()?);
    }
    Some(m)
}

fn primary_margin(theorem: &str) -> &'static str {
    match theorem {
        "T2" => "pointwise_alpha_sigma",
        "C1" => "kernel_below_history_term",
        "MU" => "mu_inequality",
        _ => "omega_below_rhs",
    }
}

fn sweep_row(doc: &Value, base: &Overrides, params: &[(SweepParam, f64)], dir: &Path) -> Row {
    let mut row = Row {
        values: params.iter().map(|p| p.1).collect(),
        certified: false,
        verdict: String::new(),
        slack: None,
        sup_g: None,
        sup_h: None,
        error: None,
    };
    let ov = params.iter().fold(*base, |ov, &(p, v)| ov.with(p, v));
    let result = (|| -> Result<(), RunError> {
        let s = load_value(doc, &ov)?;
        let report = certificate_report(&s)?;
        row.certified = report.status == "certified";
        row.verdict = report.status.to_string();
        if let Some(c) = &report.certificate {
            row.slack = c.margin(primary_margin(report.theorem)).map(|m| m.slack);
        }
        let sol = solve(&s)?;
        let grid = uniform_grid(0.0, s.horizon(), s.output_step);
        row.sup_g = sup_on(&grid, sol.u.end_time(), |t| sol.u.norm_at(t), sol.u.blow_up());
        row.sup_h = sup_on(&grid, sol.h.end_time(), |t| sol.h.eval(t), sol.h.blow_up());
        // per-row staging directory, renamed into place when complete
        let staging = dir.with_extension("staging");
        let _ = fs::remove_dir_all(&staging);
        write_atomic(&staging, "report.json", report_json(&report).as_bytes())?;
        let _ = fs::remove_dir_all(dir);
        fs::rename(&staging, dir).map_err(io_err(dir))?;
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string().replace(['\n', ','], " "));
    }
    row
}

pub struct SweepReport {
    pub rows: usize,
    pub failed_rows: usize,
    pub summary: PathBuf,
}

/// One row per point of the parameter grid, first parameter outermost.
/// Rows run in parallel; the summary is assembled in grid order.
pub fn sweep(doc: &Value, base: &Overrides, out: &Path) -> Result<SweepReport, RunError> {
    let template = load_value(doc, base)?;
    let Some(spec) = &template.sweep else {
        return Err(ScenarioError {
            errors: vec![crate::load::FieldError {
                path: "sweep".into(),
                msg: "required for sweep".into(),
            }],
        }
        .into());
    };
    if template.certificate.is_none() {
        return Err(ScenarioError {
            errors: vec![crate::load::FieldError {
                path: "certificate".into(),
                msg: "required for sweep".into(),
            }],
        }
        .into());
    }
    let mut points: Vec<Vec<(SweepParam, f64)>> = vec![vec![]];
    for (p, values) in &spec.params {
        points = points
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push((*p, v));
                    next
                })
            })
            .collect();
    }
    if spec.params.iter().any(|(_, v)| v.is_empty()) {
        points.clear();
    }
    let rows_dir = out.join("rows");
    let rows: Vec<Row> = points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| sweep_row(doc, base, pt, &rows_dir.join(format!("row-{i:04}"))))
        .collect();

    let mut csv = String::new();
    for (p, _) in &spec.params {
        csv.push_str(p.name());
        csv.push(',');
    }
    csv.push_str("certified,status,slack,sup_g,sup_h,error\n");
    for r in &rows {
        for v in &r.values {
            csv.push_str(&num(*v));
            csv.push(',');
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.certified,
            r.verdict,
            opt_num(r.slack),
            opt_num(r.sup_g),
            opt_num(r.sup_h),
            r.error.as_deref().unwrap_or("")
        );
    }
    let summary = write_atomic(out, "summary.csv", csv.as_bytes())?;
    Ok(SweepReport {
        rows: rows.len(),
        failed_rows: rows.iter().filter(|r| r.error.is_some()).count(),
        summary,
    })
}

/// Scenarios shipped with the tool, used by `selftest`.
pub const BUILTIN: [(&str, &str); 5] = [
    ("linear_decay", include_str!("../scenarios/linear_decay.json")),
    ("t1_certified", include_str!("../scenarios/t1_certified.json")),
    ("t1_rejected", include_str!("../scenarios/t1_rejected.json")),
    ("blow_up", include_str!("../scenarios/blow_up.json")),
    ("invalid_tau", include_str!("../scenarios/invalid_tau.json")),
];

pub struct SelftestLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn run_once(text: &str, ov: &Overrides, out: &Path) -> Exit {
    let doc: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(_) => return Exit::Invalid,
    };
    let s = match load_value(&doc, ov) {
        Ok(s) => s,
        Err(_) => return Exit::Invalid,
    };
    let sim = match simulate(&s, out) {
        Ok(r) => r.exit,
        Err(e) => return e.exit(),
    };
    if s.certificate.is_none() {
        return sim;
    }
    let cert = match certify(&s, out) {
        Ok(r) => r.exit(),
        Err(e) => return e.exit(),
    };
    sim.max(cert)
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map(|it| {
            it.filter_map(|e| e.ok())
                .filter(|e| e.path().is_file())
                .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

/// Runs every built-in scenario twice, compares the outputs byte for byte
/// and checks the exit code each one is expected to produce.
pub fn selftest(out: &Path, ov: &Overrides) -> Vec<SelftestLine> {
    let expected = [
        ("linear_decay", Exit::Success),
        ("t1_certified", Exit::Success),
        ("t1_rejected", Exit::NotEstablished),
        ("blow_up", Exit::Numerical),
        ("invalid_tau", Exit::Invalid),
    ];
    let mut lines = Vec::new();
    for ((name, text), (_, want)) in BUILTIN.iter().zip(expected) {
        let a = out.join(name).join("run-1");
        let b = out.join(name).join("run-2");
        let _ = fs::remove_dir_all(&a);
        let _ = fs::remove_dir_all(&b);
        let (ea, eb) = (run_once(text, ov, &a), run_once(text, ov, &b));
        let (fa, fb) = (files_in(&a), files_in(&b));
        let identical = fa == fb;
        let passed = identical && ea == want && eb == want;
        lines.push(SelftestLine {
            name: name.to_string(),
            passed,
            detail: format!(
                "exit {} (expected {}), {} file(s), reruns {}",
                ea.code(),
                want.code(),
                fa.len(),
                if identical { "byte-identical" } else { "differ" }
            ),
        });
    }
    lines
}
