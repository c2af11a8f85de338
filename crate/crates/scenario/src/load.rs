//! Scenario documents: JSON in, validated core types out.
//!
//! Validation collects every problem it finds and reports each one with the
//! path of the offending field, e.g. `matrix[0][1]` or `certificate.q`.

use std::fmt;
use std::sync::Arc;

use delaybound::{
    default_rotation, gamma_from_matrix, log_norm, norm, verify_growth_majorant, BoundData, CheckOptions, HistoryFn,
    Mat, MatrixFn, NonlinearMap, Nonlinearity, ProblemSpec, QuadratureSettings, ScalarFn, StepControl, TailModel,
    VectorFn,
};
use serde_json::{Map, Value};

use crate::expr::{self, Expr};

const DOMAIN_SAMPLES: usize = 400;
const AUTO_NORM_SAFETY: f64 = 1.01;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub msg: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "(document): {}", self.msg)
        } else {
            write!(f, "{}: {}", self.path, self.msg)
        }
    }
}

/// A rejected scenario. Never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub errors: Vec<FieldError>,
}

impl ScenarioError {
    fn single(path: &str, msg: impl Into<String>) -> Self {
        ScenarioError {
            errors: vec![FieldError {
                path: path.into(),
                msg: msg.into(),
            }],
        }
    }

    pub fn paths(&self) -> Vec<&str> {
        self.errors.iter().map(|e| e.path.as_str()).collect()
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario:")?;
        for e in &self.errors {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Clone, Debug)]
pub enum TheoremChoice {
    T1,
    T2 { q: f64 },
    C1,
    Mu { mu: ScalarFn, mu_dot: Option<ScalarFn> },
}

impl TheoremChoice {
    pub fn label(&self) -> &'static str {
        match self {
            TheoremChoice::T1 => "T1",
            TheoremChoice::T2 { .. } => "T2",
            TheoremChoice::C1 => "C1",
            TheoremChoice::Mu { .. } => "MU",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CertSpec {
    pub theorem: TheoremChoice,
    pub tail: TailModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    AlphaScale,
    WScale,
    BetaScale,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::AlphaScale => "alpha_scale",
            SweepParam::WScale => "w_scale",
            SweepParam::BetaScale => "beta_scale",
        }
    }

    fn from_name(s: &str) -> Option<SweepParam> {
        [SweepParam::AlphaScale, SweepParam::WScale, SweepParam::BetaScale]
            .into_iter()
            .find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub params: Vec<(SweepParam, Vec<f64>)>,
}

/// Command-line adjustments applied on top of a document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overrides {
    pub horizon: Option<f64>,
    pub tol: Option<f64>,
    pub grid_step: Option<f64>,
    pub seed: Option<u64>,
    pub alpha_scale: f64,
    pub w_scale: f64,
    pub beta_scale: f64,
}

impl Default for Overrides {
    fn default() -> Self {
        Overrides {
            horizon: None,
            tol: None,
            grid_step: None,
            seed: None,
            alpha_scale: 1.0,
            w_scale: 1.0,
            beta_scale: 1.0,
        }
    }
}

impl Overrides {
    pub fn with(mut self, p: SweepParam, v: f64) -> Self {
        match p {
            SweepParam::AlphaScale => self.alpha_scale = v,
            SweepParam::WScale => self.w_scale = v,
            SweepParam::BetaScale => self.beta_scale = v,
        }
        self
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub problem: ProblemSpec,
    pub bounds: BoundData,
    pub certificate: Option<CertSpec>,
    pub control: StepControl,
    pub check: CheckOptions,
    pub output_step: f64,
    pub sweep: Option<SweepSpec>,
    /// Partial operations whose domain was only checked at sample points.
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn tau(&self) -> f64 {
        self.problem.tau
    }

    pub fn horizon(&self) -> f64 {
        self.problem.horizon
    }

    pub fn dim(&self) -> usize {
        self.problem.n
    }
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    load_scenario_with(text, &Overrides::default())
}

pub fn load_scenario_with(text: &str, ov: &Overrides) -> Result<Scenario, ScenarioError> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| ScenarioError::single("", format!("malformed JSON at line {}, column {}: {e}", e.line(), e.column())))?;
    load_value(&doc, ov)
}

pub fn load_value(doc: &Value, ov: &Overrides) -> Result<Scenario, ScenarioError> {
    let Some(obj) = doc.as_object() else {
        return Err(ScenarioError::single("", "scenario must be a JSON object"));
    };
    let mut r = Reader::default();
    r.check_keys(
        obj,
        "",
        &[
            "name",
            "dimension",
            "tau",
            "p",
            "horizon",
            "matrix",
            "nonlinearity",
            "forcing",
            "history",
            "gamma",
            "certificate",
            "tolerances",
            "output",
            "sweep",
        ],
    );
    let name = r.string(obj, "name", "name");
    let before = r.errors.len();
    let n = r.count(obj, "dimension", "dimension");
    let tau = r.number(obj, "tau", "tau");
    let p = r.number(obj, "p", "p");
    let horizon = ov.horizon.or_else(|| r.number(obj, "horizon", "horizon"));
    if let Some(tau) = tau {
        if !(tau > 0.0) || !tau.is_finite() {
            r.err("tau", format!("delay must satisfy tau > 0, got {tau}"));
        }
    }
    if let Some(p) = p {
        if !(p > 1.0) || !p.is_finite() {
            r.err("p", format!("exponent must satisfy p > 1, got {p}"));
        }
    }
    if let (Some(h), Some(tau)) = (horizon, tau) {
        if !(h > tau) || !h.is_finite() {
            r.err("horizon", format!("horizon must be finite and exceed tau = {tau}, got {h}"));
        }
    }
    let (Some(n), Some(tau), Some(p), Some(horizon)) = (n, tau, p, horizon) else {
        return Err(r.finish());
    };
    if r.errors.len() > before {
        return Err(r.finish());
    }
    let name = name.unwrap_or_default();

    let matrix = r.expr_matrix(obj.get("matrix"), "matrix", n, (0.0, horizon));
    let history = r.expr_vector(obj.get("history"), "history", n, (-tau, 0.0));
    let nl = r.nonlinearity(obj.get("nonlinearity"), n, horizon);
    let forcing = r.forcing(obj.get("forcing"), n, horizon);
    let gamma_doc = match obj.get("gamma") {
        None => {
            r.err("gamma", "required: an expression or \"auto\"");
            None
        }
        Some(Value::String(s)) if s.trim() == "auto" => Some(None),
        Some(v) => r.expr_field(v, "gamma", (0.0, horizon)).map(Some),
    };
    let certificate = r.certificate(obj.get("certificate"), tau, horizon);
    let (control, quad) = r.tolerances(obj.get("tolerances"), ov.tol);
    let output_step = r.output(obj.get("output"), tau, ov.grid_step);
    let sweep = r.sweep(obj.get("sweep"));
    let cert_step = match obj.get("certificate").and_then(|c| c.get("grid_step")) {
        _ if ov.grid_step.is_some() => ov.grid_step,
        Some(v) => match v.as_f64() {
            Some(s) if s > 0.0 && s.is_finite() => Some(s),
            _ => {
                r.err("certificate.grid_step", "must be a positive number");
                None
            }
        },
        None => None,
    };
    if !r.errors.is_empty() {
        return Err(r.finish());
    }
    let (matrix, history, (alpha_expr, kind), forcing, gamma_doc) =
        (matrix.unwrap(), history.unwrap(), nl.unwrap(), forcing.unwrap(), gamma_doc.unwrap());

    let a = matrix_fn(&matrix);
    let alpha = scaled(scalar_fn(&alpha_expr), ov.alpha_scale);
    let g = match NonlinearMap::new(n, p, alpha, kind) {
        Ok(g) => g,
        Err(e) => return Err(ScenarioError::single("nonlinearity", e.to_string())),
    };
    let v = HistoryFn::new(scaled_vector(vector_fn(&history), ov.w_scale));
    if let Err(e) = v.check_continuity(tau, 2000) {
        r.err("history", e.to_string());
    }
    let (f, beta) = match forcing {
        Forcing::None => (VectorFn::zero(n), ScalarFn::zero()),
        Forcing::Given { f: exprs, beta } => {
            let f = scaled_vector(vector_fn(&exprs), ov.beta_scale);
            let constant: Option<Vec<f64>> = exprs.iter().map(|e| e.fold().constant_value()).collect();
            let beta = match (beta, constant) {
                (BetaDoc::Expr(b), _) => scaled(scalar_fn(&b), ov.beta_scale),
                (BetaDoc::AutoNorm, _) if f.is_identically_zero() => ScalarFn::zero(),
                (BetaDoc::AutoNorm, Some(c)) => ScalarFn::constant(AUTO_NORM_SAFETY * norm(&c) * ov.beta_scale),
                (BetaDoc::AutoNorm, None) => auto_norm_beta(&f, tau, horizon),
            };
            (f, beta)
        }
    };
    let ps = match ProblemSpec::new(tau, p, horizon, a.clone(), g, f, beta, v) {
        Ok(ps) => ps,
        Err(e) => return Err(ScenarioError::single("", e.to_string())),
    };
    if let Err(e) = ps.check_majorants(DOMAIN_SAMPLES) {
        let msg = e.to_string();
        let path = if msg.contains("alpha") {
            "nonlinearity.alpha"
        } else {
            "forcing.beta"
        };
        r.err(path, msg);
    }
    let growth = verify_growth_majorant(&ps.g, 500, 2.0, (0.0, horizon), ov.seed.unwrap_or(0));
    match growth {
        Ok(rep) if rep.violated => r.err(
            "nonlinearity",
            format!("declared majorant violated: ratio {} at t = {}", rep.max_ratio, rep.worst_t),
        ),
        Err(e) => r.err("nonlinearity", e.to_string()),
        _ => {}
    }

    let gamma = match gamma_doc {
        None => auto_gamma(&a),
        Some(e) => {
            let gamma = scalar_fn(&e);
            for k in 0..=DOMAIN_SAMPLES {
                let t = horizon * k as f64 / DOMAIN_SAMPLES as f64;
                let sharp = gamma_from_matrix(&a, t).unwrap_or(f64::NAN);
                let given = gamma.eval(t);
                if !(given >= sharp - 1e-9 * (1.0 + sharp.abs())) {
                    r.err(
                        "gamma",
                        format!("gamma({t}) = {given} is below the logarithmic norm {sharp} of the matrix"),
                    );
                    break;
                }
            }
            gamma
        }
    };
    if !r.errors.is_empty() {
        return Err(r.finish());
    }
    let bounds = match BoundData::from_problem(&ps, gamma) {
        Ok(b) => b,
        Err(e) => return Err(ScenarioError::single("", e.to_string())),
    };
    if let Err(e) = bounds.check_nonnegative(horizon, DOMAIN_SAMPLES) {
        return Err(ScenarioError::single("", e.to_string()));
    }
    // asserted tail bounds refer to the unscaled coefficients
    let certificate = certificate.map(|c| CertSpec {
        tail: c.tail.scaled(ov.alpha_scale, ov.beta_scale, p),
        ..c
    });
    Ok(Scenario {
        name,
        problem: ps,
        bounds,
        certificate,
        control,
        check: CheckOptions {
            grid_step: cert_step,
            quadrature: quad,
        },
        output_step,
        sweep,
        warnings: r.warnings,
    })
}

fn scalar_fn(e: &Expr) -> ScalarFn {
    let e = e.fold();
    match e.constant_value() {
        Some(c) => ScalarFn::constant(c),
        None => {
            let e = Arc::new(e);
            ScalarFn::new(move |t| e.eval(t))
        }
    }
}

fn scaled(f: ScalarFn, s: f64) -> ScalarFn {
    if s == 1.0 {
        f
    } else {
        f.scaled(s)
    }
}

fn vector_fn(es: &[Expr]) -> VectorFn {
    let n = es.len();
    let folded: Vec<Expr> = es.iter().map(Expr::fold).collect();
    let consts: Option<Vec<f64>> = folded.iter().map(Expr::constant_value).collect();
    match consts {
        Some(c) if c.iter().all(|&x| x == 0.0) => VectorFn::zero(n),
        Some(c) => VectorFn::constant(c),
        None => {
            let folded = Arc::new(folded);
            VectorFn::new(n, move |t| folded.iter().map(|e| e.eval(t)).collect())
        }
    }
}

fn scaled_vector(f: VectorFn, s: f64) -> VectorFn {
    if s == 1.0 || f.is_identically_zero() {
        return f;
    }
    let n = f.dim();
    VectorFn::new(n, move |t| f.eval(t).into_iter().map(|x| s * x).collect())
}

fn matrix_fn(m: &[Vec<Expr>]) -> MatrixFn {
    let n = m.len();
    let folded: Vec<Vec<Expr>> = m.iter().map(|row| row.iter().map(Expr::fold).collect()).collect();
    let consts: Option<Vec<Vec<f64>>> = folded
        .iter()
        .map(|row| row.iter().map(Expr::constant_value).collect())
        .collect();
    match consts {
        Some(rows) => MatrixFn::constant(Mat::from_fn(n, |i, j| rows[i][j])),
        None => {
            let folded = Arc::new(folded);
            MatrixFn::new(n, move |t| Mat::from_fn(n, |i, j| folded[i][j].eval(t)))
        }
    }
}

fn auto_gamma(a: &MatrixFn) -> ScalarFn {
    if let Some(m) = a.as_constant() {
        if let Ok(g) = log_norm(m) {
            return ScalarFn::constant(g);
        }
    }
    let a = a.clone();
    ScalarFn::new(move |t| gamma_from_matrix(&a, t).unwrap_or(f64::NAN))
}

/// Piecewise-constant majorant of `‖f‖`: on each panel, the largest sampled
/// norm times the safety factor.
fn auto_norm_beta(f: &VectorFn, tau: f64, horizon: f64) -> ScalarFn {
    const SUB: usize = 8;
    let width = (tau / 20.0).min(horizon / 200.0);
    let panels = (horizon / width).ceil() as usize + 1;
    let levels: Vec<f64> = (0..panels)
        .map(|k| {
            let a = k as f64 * width;
            (0..=SUB)
                .map(|j| norm(&f.eval(a + width * j as f64 / SUB as f64)))
                .fold(0.0, f64::max)
                * AUTO_NORM_SAFETY
        })
        .collect();
    // continuous majorant: node k carries the larger of the two panels it joins
    let nodes: Vec<f64> = (0..=panels)
        .map(|k| levels[k.saturating_sub(1)].max(levels[k.min(panels - 1)]))
        .collect();
    ScalarFn::new(move |t| {
        let x = t.max(0.0) / width;
        let k = (x.floor() as usize).min(panels - 1);
        let s = (x - k as f64).min(1.0);
        nodes[k] + s * (nodes[k + 1] - nodes[k])
    })
}

enum Forcing {
    None,
    Given { f: Vec<Expr>, beta: BetaDoc },
}

enum BetaDoc {
    Expr(Expr),
    AutoNorm,
}

#[derive(Default)]
struct Reader {
    errors: Vec<FieldError>,
    warnings: Vec<String>,
}

impl Reader {
    fn err(&mut self, path: &str, msg: impl Into<String>) {
        self.errors.push(FieldError {
            path: path.into(),
            msg: msg.into(),
        });
    }

    fn finish(self) -> ScenarioError {
        ScenarioError { errors: self.errors }
    }

    fn check_keys(&mut self, obj: &Map<String, Value>, prefix: &str, known: &[&str]) {
        for k in obj.keys() {
            if !known.contains(&k.as_str()) {
                let path = join(prefix, k);
                self.err(&path, "unknown field");
            }
        }
    }

    fn string(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<String> {
        match obj.get(key) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.err(path, "must be a string");
                None
            }
            None => {
                self.err(path, "required");
                None
            }
        }
    }

    fn number(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        match obj.get(key) {
            Some(v) => match v.as_f64() {
                Some(x) => Some(x),
                None => {
                    self.err(path, "must be a number");
                    None
                }
            },
            None => {
                self.err(path, "required");
                None
            }
        }
    }

    fn opt_positive(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        let v = obj.get(key)?;
        match v.as_f64() {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            _ => {
                self.err(path, "must be a positive number");
                None
            }
        }
    }

    fn count(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<usize> {
        match obj.get(key) {
            Some(v) => match v.as_u64() {
                Some(n) if (1..=64).contains(&n) => Some(n as usize),
                _ => {
                    self.err(path, "must be an integer between 1 and 64");
                    None
                }
            },
            None => {
                self.err(path, "required");
                None
            }
        }
    }

    fn object<'a>(&mut self, v: Option<&'a Value>, path: &str) -> Option<&'a Map<String, Value>> {
        match v {
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                self.err(path, "must be an object");
                None
            }
            None => {
                self.err(path, "required");
                None
            }
        }
    }

    /// Parses an expression given as a string or a number and checks its
    /// domain on `span`.
    fn expr_field(&mut self, v: &Value, path: &str, span: (f64, f64)) -> Option<Expr> {
        let e = match v {
            Value::Number(x) => Expr::Const(x.as_f64()?),
            Value::String(s) => match expr::parse(s) {
                Ok(e) => e,
                Err(e) => {
                    self.err(path, format!("{} at line {}, column {}", e.msg, e.pos.line, e.pos.col));
                    return None;
                }
            },
            _ => {
                self.err(path, "must be an expression string or a number");
                return None;
            }
        };
        if let Err(d) = e.check_domain(span.0, span.1, DOMAIN_SAMPLES) {
            self.err(path, format!("{} at t = {} (line {}, column {})", d.what, d.t, d.pos.line, d.pos.col));
            return None;
        }
        for risk in e.domain_risks() {
            self.warnings.push(format!("{path}: {risk} checked at sample points only"));
        }
        Some(e)
    }

    fn expr_vector(&mut self, v: Option<&Value>, path: &str, n: usize, span: (f64, f64)) -> Option<Vec<Expr>> {
        let items = match v {
            Some(Value::Array(a)) => a,
            Some(_) => {
                self.err(path, "must be an array of expressions");
                return None;
            }
            None => {
                self.err(path, "required");
                return None;
            }
        };
        if items.len() != n {
            self.err(path, format!("expected {n} entries, found {}", items.len()));
            return None;
        }
        let out: Vec<Option<Expr>> = items
            .iter()
            .enumerate()
            .map(|(i, x)| self.expr_field(x, &format!("{path}[{i}]"), span))
            .collect();
        out.into_iter().collect()
    }

    fn expr_matrix(&mut self, v: Option<&Value>, path: &str, n: usize, span: (f64, f64)) -> Option<Vec<Vec<Expr>>> {
        let rows = match v {
            Some(Value::Array(a)) => a,
            Some(_) => {
                self.err(path, "must be an array of rows");
                return None;
            }
            None => {
                self.err(path, "required");
                return None;
            }
        };
        if rows.len() != n {
            self.err(path, format!("expected {n} rows, found {}", rows.len()));
            return None;
        }
        let out: Vec<Option<Vec<Expr>>> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| self.expr_vector(Some(row), &format!("{path}[{i}]"), n, span))
            .collect();
        out.into_iter().collect()
    }

    fn nonlinearity(&mut self, v: Option<&Value>, n: usize, horizon: f64) -> Option<(Expr, Nonlinearity)> {
        let path = "nonlinearity";
        let obj = self.object(v, path)?;
        self.check_keys(obj, path, &["kind", "alpha", "angle"]);
        let kind = self.string(obj, "kind", "nonlinearity.kind")?;
        let alpha = match (kind.as_str(), obj.get("alpha")) {
            ("zero", None) => Some(Expr::Const(0.0)),
            (_, Some(a)) => self.expr_field(a, "nonlinearity.alpha", (0.0, horizon)),
            (_, None) => {
                self.err("nonlinearity.alpha", "required for this kind");
                None
            }
        };
        let angle = self.opt_number(obj, "angle", "nonlinearity.angle");
        let nl = match kind.as_str() {
            "zero" => Nonlinearity::Zero,
            "sharp_power" => Nonlinearity::SharpPower {
                q: default_rotation(n, angle.unwrap_or(std::f64::consts::FRAC_PI_3)),
            },
            "soft_power" => Nonlinearity::SoftPower,
            other => {
                self.err(
                    "nonlinearity.kind",
                    format!("unknown kind '{other}'; expected zero, sharp_power or soft_power"),
                );
                return None;
            }
        };
        if angle.is_some() && kind != "sharp_power" {
            self.err("nonlinearity.angle", "only sharp_power takes an angle");
        }
        Some((alpha?, nl))
    }

    fn opt_number(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        let v = obj.get(key)?;
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.err(path, "must be a finite number");
                None
            }
        }
    }

    fn forcing(&mut self, v: Option<&Value>, n: usize, horizon: f64) -> Option<Forcing> {
        let Some(v) = v else {
            return Some(Forcing::None);
        };
        let path = "forcing";
        let obj = self.object(Some(v), path)?;
        self.check_keys(obj, path, &["f", "beta"]);
        let f = self.expr_vector(obj.get("f"), "forcing.f", n, (0.0, horizon));
        let beta = match obj.get("beta") {
            None => {
                self.err("forcing.beta", "required: an expression or \"auto_norm\"");
                None
            }
            Some(Value::String(s)) if s.trim() == "auto_norm" => Some(BetaDoc::AutoNorm),
            Some(b) => self.expr_field(b, "forcing.beta", (0.0, horizon)).map(BetaDoc::Expr),
        };
        Some(Forcing::Given { f: f?, beta: beta? })
    }

    fn certificate(&mut self, v: Option<&Value>, tau: f64, horizon: f64) -> Option<CertSpec> {
        let v = v?;
        let path = "certificate";
        let obj = self.object(Some(v), path)?;
        self.check_keys(obj, path, &["theorem", "q", "mu", "mu_dot", "tail", "grid_step"]);
        let theorem = self.string(obj, "theorem", "certificate.theorem")?;
        let tail = match obj.get("tail") {
            None => TailModel::truncate(),
            Some(t) => match serde_json::from_value::<TailModel>(t.clone()) {
                Ok(m) => match m.validate() {
                    Ok(()) => m,
                    Err(e) => {
                        self.err("certificate.tail", e.to_string());
                        return None;
                    }
                },
                Err(e) => {
                    self.err("certificate.tail", e.to_string());
                    return None;
                }
            },
        };
        let choice = match theorem.as_str() {
            "T1" => TheoremChoice::T1,
            "C1" => TheoremChoice::C1,
            "T2" => {
                let q = self.number(obj, "q", "certificate.q")?;
                if !(q > 1.0) || !q.is_finite() {
                    self.err("certificate.q", format!("q must exceed 1, got {q}"));
                    return None;
                }
                TheoremChoice::T2 { q }
            }
            "MU" => {
                let mu = match obj.get("mu") {
                    Some(m) => self.expr_field(m, "certificate.mu", (-tau, horizon)),
                    None => {
                        self.err("certificate.mu", "required for theorem MU");
                        None
                    }
                };
                let mu_dot = match obj.get("mu_dot") {
                    Some(m) => Some(self.expr_field(m, "certificate.mu_dot", (0.0, horizon))?),
                    None => None,
                };
                TheoremChoice::Mu {
                    mu: scalar_fn(&mu?),
                    mu_dot: mu_dot.as_ref().map(scalar_fn),
                }
            }
            other => {
                self.err(
                    "certificate.theorem",
                    format!("unknown theorem '{other}'; expected T1, T2, C1 or MU"),
                );
                return None;
            }
        };
        if obj.contains_key("q") && !matches!(choice, TheoremChoice::T2 { .. }) {
            self.err("certificate.q", "only theorem T2 takes q");
        }
        Some(CertSpec { theorem: choice, tail })
    }

    fn tolerances(&mut self, v: Option<&Value>, tol: Option<f64>) -> (StepControl, QuadratureSettings) {
        let mut ctrl = StepControl::default();
        let mut quad = QuadratureSettings::default();
        if let Some(v) = v {
            if let Some(obj) = self.object(Some(v), "tolerances") {
                self.check_keys(
                    obj,
                    "tolerances",
                    &["rtol", "atol", "quad_abs", "quad_rel", "initial_step", "max_step"],
                );
                if let Some(x) = self.opt_positive(obj, "rtol", "tolerances.rtol") {
                    ctrl.rtol = x;
                }
                if let Some(x) = self.opt_positive(obj, "atol", "tolerances.atol") {
                    ctrl.atol = x;
                }
                if let Some(x) = self.opt_positive(obj, "quad_abs", "tolerances.quad_abs") {
                    quad.abs_tol = x;
                }
                if let Some(x) = self.opt_positive(obj, "quad_rel", "tolerances.quad_rel") {
                    quad.rel_tol = x;
                }
                ctrl.initial_step = self.opt_positive(obj, "initial_step", "tolerances.initial_step");
                ctrl.max_step = self.opt_positive(obj, "max_step", "tolerances.max_step");
            }
        }
        if let Some(t) = tol {
            if t > 0.0 && t.is_finite() {
                ctrl.rtol = t;
                ctrl.atol = t * 1e-3;
            } else {
                self.err("--tol", "must be a positive number");
            }
        }
        if let Err(e) = ctrl.validate() {
            self.err("tolerances", e.to_string());
        }
        (ctrl, quad)
    }

    fn output(&mut self, v: Option<&Value>, tau: f64, grid_step: Option<f64>) -> f64 {
        let mut step = tau / 100.0;
        if let Some(v) = v {
            if let Some(obj) = self.object(Some(v), "output") {
                self.check_keys(obj, "output", &["grid_step"]);
                if let Some(s) = self.opt_positive(obj, "grid_step", "output.grid_step") {
                    step = s;
                }
            }
        }
        if let Some(s) = grid_step {
            if s > 0.0 && s.is_finite() {
                step = s;
            } else {
                self.err("--grid-step", "must be a positive number");
            }
        }
        step
    }

    fn sweep(&mut self, v: Option<&Value>) -> Option<SweepSpec> {
        let obj = self.object(Some(v?), "sweep")?;
        let mut params = Vec::new();
        for (k, vals) in obj {
            let path = join("sweep", k);
            let Some(p) = SweepParam::from_name(k) else {
                self.err(&path, "unknown sweep parameter; expected alpha_scale, w_scale or beta_scale");
                continue;
            };
            let Some(arr) = vals.as_array() else {
                self.err(&path, "must be an array of numbers");
                continue;
            };
            let mut xs = Vec::new();
            for (i, x) in arr.iter().enumerate() {
                match x.as_f64() {
                    Some(x) if x >= 0.0 && x.is_finite() => xs.push(x),
                    _ => self.err(&format!("{path}[{i}]"), "must be a finite nonnegative number"),
                }
            }
            params.push((p, xs));
        }
        if params.is_empty() || params.len() > 2 {
            self.err("sweep", "must name one or two parameters");
            return None;
        }
        Some(SweepSpec { params })
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "minimal",
        "dimension": 1,
        "tau": 1,
        "p": 2,
        "horizon": 5,
        "matrix": [["-1"]],
        "nonlinearity": {"kind": "zero"},
        "history": ["0.1"],
        "gamma": "auto"
    }"#;

    fn with(field: &str, value: &str) -> String {
        let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
        let mut target = &mut v;
        let parts: Vec<&str> = field.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            target = target.get_mut(*p).unwrap();
        }
        target[parts[parts.len() - 1]] = serde_json::from_str(value).unwrap();
        v.to_string()
    }

    #[test]
    fn minimal_scenario() {
        let s = load_scenario(MINIMAL).unwrap();
        assert_eq!(s.dim(), 1);
        assert_eq!(s.bounds.gamma.as_constant(), Some(-1.0));
        assert!(s.problem.g.is_zero());
        assert!(s.bounds.beta.is_identically_zero());
        assert!((s.bounds.w.eval(-0.5) - 0.1).abs() < 1e-15);
        assert!(s.certificate.is_none());
    }

    #[test]
    fn invariant_violations_cite_fields() {
        let e = load_scenario(&with("tau", "0")).unwrap_err();
        assert_eq!(e.paths(), vec!["tau"]);
        assert!(e.to_string().contains("tau > 0"));
        let e = load_scenario(&with("p", "1")).unwrap_err();
        assert!(e.to_string().contains("p > 1"));
        let e = load_scenario(&with("horizon", "0.5")).unwrap_err();
        assert_eq!(e.paths(), vec!["horizon"]);
    }

    #[test]
    fn every_offending_field_is_listed() {
        let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
        v["matrix"] = serde_json::json!([["-1 +"]]);
        v["history"] = serde_json::json!(["log(t)"]);
        v["extra"] = serde_json::json!(1);
        let e = load_scenario(&v.to_string()).unwrap_err();
        let paths = e.paths();
        assert!(paths.contains(&"matrix[0][0]"));
        assert!(paths.contains(&"history[0]"));
        assert!(paths.contains(&"extra"));
    }

    #[test]
    fn required_fields_are_not_defaulted() {
        let mut v: Value = serde_json::from_str(MINIMAL).unwrap();
        v.as_object_mut().unwrap().remove("gamma");
        v.as_object_mut().unwrap().remove("history");
        let e = load_scenario(&v.to_string()).unwrap_err();
        assert!(e.paths().contains(&"gamma"));
        assert!(e.paths().contains(&"history"));
    }

    #[test]
    fn supplied_gamma_must_dominate() {
        let e = load_scenario(&with("gamma", "\"-2\"")).unwrap_err();
        assert_eq!(e.paths(), vec!["gamma"]);
        let s = load_scenario(&with("gamma", "\"-0.5\"")).unwrap();
        assert_eq!(s.bounds.gamma.as_constant(), Some(-0.5));
    }

    #[test]
    fn auto_norm_beta_dominates_forcing() {
        let s = load_scenario(&with("forcing", r#"{"f": ["sin(t)"], "beta": "auto_norm"}"#)).unwrap();
        for k in 0..500 {
            let t = 0.01 * k as f64;
            assert!(s.bounds.beta.eval(t) >= t.sin().abs());
        }
        let s = load_scenario(&with("forcing", r#"{"f": ["0.3"], "beta": "auto_norm"}"#)).unwrap();
        assert_eq!(s.bounds.beta.as_constant(), Some(0.303));
        let e = load_scenario(&with("forcing", r#"{"f": ["1"], "beta": "0.5"}"#)).unwrap_err();
        assert_eq!(e.paths(), vec!["forcing.beta"]);
    }

    #[test]
    fn certificate_options() {
        let s = load_scenario(&with("certificate", r#"{"theorem": "T2", "q": 2}"#)).unwrap();
        assert!(matches!(s.certificate.unwrap().theorem, TheoremChoice::T2 { q } if q == 2.0));
        let e = load_scenario(&with("certificate", r#"{"theorem": "T2"}"#)).unwrap_err();
        assert_eq!(e.paths(), vec!["certificate.q"]);
        let e = load_scenario(&with("certificate", r#"{"theorem": "T1", "tail": {"kernel": {"kind": "nope"}}}"#))
            .unwrap_err();
        assert_eq!(e.paths(), vec!["certificate.tail"]);
    }

    #[test]
    fn overrides_apply() {
        let ov = Overrides {
            horizon: Some(9.0),
            w_scale: 2.0,
            ..Overrides::default()
        };
        let s = load_scenario_with(MINIMAL, &ov).unwrap();
        assert_eq!(s.horizon(), 9.0);
        assert!((s.bounds.w.eval(0.0) - 0.2).abs() < 1e-15);
    }
}
