use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_delaybound"))
}

fn builtin(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn builtin_doc(name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(builtin(name)).unwrap()).unwrap()
}

fn write_doc(dir: &Path, doc: &Value) -> PathBuf {
    let p = dir.join("scenario.json");
    fs::write(&p, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    p
}

fn run(cmd: &str, scenario: &Path, out: &Path) -> Output {
    bin().arg(cmd).arg("--scenario").arg(scenario).arg("--out").arg(out).output().unwrap()
}

/// Rows of a CSV file keyed by header name; empty cells become `None`.
fn read_csv(path: &Path) -> Vec<Vec<(String, Option<String>)>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| {
            header
                .iter()
                .cloned()
                .zip(l.split(',').map(|c| (!c.is_empty()).then(|| c.to_string())))
                .collect()
        })
        .collect()
}

fn cell(row: &[(String, Option<String>)], key: &str) -> Option<f64> {
    row.iter().find(|(k, _)| k == key).unwrap().1.as_ref().map(|v| v.parse().unwrap())
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn linear_decay_is_exponential() {
    let out = TempDir::new().unwrap();
    let o = run("simulate", &builtin("linear_decay"), out.path());
    assert_eq!(o.status.code(), Some(0));
    let rows = read_csv(&out.path().join("trajectory.csv"));
    assert!(rows.len() > 100);
    for r in &rows {
        let t = cell(r, "t").unwrap();
        let exact = 0.5 * (-t).exp();
        assert!((cell(r, "g").unwrap() - exact).abs() <= 1e-8, "t = {t}");
        assert!((cell(r, "h").unwrap() - exact).abs() <= 1e-8, "t = {t}");
    }
}

#[test]
fn scalar_positive_solution_equals_comparison() {
    let dir = TempDir::new().unwrap();
    let doc = json!({
        "name": "equality",
        "dimension": 1,
        "tau": 1.0,
        "p": 2.0,
        "horizon": 5.0,
        "matrix": [["-1 + 0.3*sin(t)"]],
        "nonlinearity": {"kind": "sharp_power", "alpha": "0.2"},
        "history": ["0.5 + 0.1*t"],
        "gamma": "auto",
        "forcing": {"f": ["0.1*exp(-t)"], "beta": "0.1*exp(-t)"}
    });
    let out = dir.path().join("out");
    let o = run("simulate", &write_doc(dir.path(), &doc), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for r in read_csv(&out.join("trajectory.csv")) {
        let (g, h) = (cell(&r, "g").unwrap(), cell(&r, "h").unwrap());
        assert!((g - h).abs() <= 1e-7 * h, "{g} vs {h}");
    }
}

#[test]
fn blow_up_is_reported() {
    let out = TempDir::new().unwrap();
    let o = run("simulate", &builtin("blow_up"), out.path());
    assert_eq!(o.status.code(), Some(3));
    let status = fs::read_to_string(out.path().join("status.txt")).unwrap();
    assert!(status.contains("blow-up"), "{status}");
    // rows past the blow-up carry no comparison value
    let rows = read_csv(&out.path().join("trajectory.csv"));
    assert!(cell(rows.last().unwrap(), "h").is_none());
}

#[test]
fn first_certificate_constants() {
    let out = TempDir::new().unwrap();
    let o = run("certify", &builtin("t1_certified"), out.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(out.path());
    assert_eq!(r["status"], "certified");
    let k = &r["certificate"]["constants"];
    // γ = −1, τ = 1, α = 0.1, p = 2, ‖history‖ ≡ 0.1, β = 0
    let (e, a, w) = (1f64.exp(), 0.1, 0.1);
    let h_tau = w / e + a * w * w * (1.0 - 1.0 / e);
    assert!((k["h_tau"].as_f64().unwrap() - h_tau).abs() < 1e-12);
    assert_eq!(k["omega"].as_f64().unwrap(), 0.0);
    // kernel over [τ, ∞) is α e; C = 1/((h_τ ν(τ))⁻¹ − α e)
    assert!((k["tail_integral"].as_f64().unwrap() - a * e).abs() < 1e-9);
    let c = 1.0 / (1.0 / (h_tau * e) - a * e);
    assert!((k["c"].as_f64().unwrap() - c).abs() < 1e-9 * c);
}

#[test]
fn large_alpha_has_negative_slack() {
    let out = TempDir::new().unwrap();
    let o = run("certify", &builtin("t1_rejected"), out.path());
    assert_eq!(o.status.code(), Some(2));
    let r = report(out.path());
    assert_eq!(r["status"], "not_established");
    let m = &r["certificate"]["margins"][0];
    assert_eq!(m["name"], "omega_below_rhs");
    assert!(m["slack"].as_f64().unwrap() < 0.0);
}

#[test]
fn constant_mu_certificate() {
    let dir = TempDir::new().unwrap();
    let doc = json!({
        "name": "mu_one",
        "dimension": 2,
        "tau": 1.0,
        "p": 2.0,
        "horizon": 8.0,
        "matrix": [["-2", "0"], ["0", "-2"]],
        "nonlinearity": {"kind": "sharp_power", "alpha": "0.5"},
        "history": ["0.5", "0"],
        "gamma": "auto",
        "forcing": {"f": ["sin(t)", "0"], "beta": "1"},
        "certificate": {
            "theorem": "MU",
            "mu": "1",
            "mu_dot": "0",
            "tail": {"kernel": {"kind": "truncate"}, "pointwise_holds": true}
        }
    });
    let out = dir.path().join("out");
    let o = run("certify", &write_doc(dir.path(), &doc), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&out);
    assert_eq!(r["certificate"]["global_existence"], "certified");
    assert_eq!(r["certificate"]["constants"]["bound"].as_f64(), Some(1.0));
}

/// The first-certificate scenario with α = 1 and the matching kernel tail.
fn alpha_one() -> Value {
    let mut doc = builtin_doc("t1_certified");
    doc["nonlinearity"]["alpha"] = json!("1");
    doc["certificate"]["tail"]["kernel"]["c"] = json!(3.3546262790251185e-4);
    doc
}

/// Certifies the document with the scale written into the scenario itself.
fn certified_alone(doc: &Value, dir: &Path, key: &str, v: f64) -> bool {
    let mut d = doc.clone();
    let scale = |e: &Value| json!(format!("{v:?}*({})", e.as_str().unwrap()));
    if key == "alpha_scale" {
        d["nonlinearity"]["alpha"] = scale(&d["nonlinearity"]["alpha"]);
        let c = &mut d["certificate"]["tail"]["kernel"]["c"];
        *c = json!(c.as_f64().unwrap() * v);
    } else {
        let h: Vec<Value> = d["history"].as_array().unwrap().iter().map(scale).collect();
        d["history"] = json!(h);
    }
    let sub = dir.join(format!("{key}-{v}"));
    fs::create_dir_all(&sub).unwrap();
    run("certify", &write_doc(&sub, &d), &sub.join("out")).status.code() == Some(0)
}

fn sweep_column(doc: &Value, key: &str, values: &[f64]) -> (Vec<bool>, Vec<bool>) {
    let dir = TempDir::new().unwrap();
    let mut d = doc.clone();
    d["sweep"] = json!({ key: values });
    let out = dir.path().join("out");
    let o = run("sweep", &write_doc(dir.path(), &d), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out.join("summary.csv"));
    assert_eq!(rows.len(), values.len());
    let swept: Vec<bool> = rows
        .iter()
        .zip(values)
        .map(|(r, v)| {
            assert_eq!(cell(r, key), Some(*v));
            r.iter().find(|(k, _)| k == "certified").unwrap().1.as_deref() == Some("true")
        })
        .collect();
    let alone = values.iter().map(|&v| certified_alone(doc, dir.path(), key, v)).collect();
    (swept, alone)
}

#[test]
fn alpha_sweep_switches_once() {
    let (swept, alone) = sweep_column(&alpha_one(), "alpha_scale", &[0.01, 0.1, 1.0, 10.0]);
    assert_eq!(swept, alone);
    assert!(swept[0] && !swept[3], "{swept:?}");
    let flips = swept.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(flips, 1, "{swept:?}");
}

#[test]
fn w_sweep_is_downward_closed() {
    let (swept, alone) = sweep_column(&alpha_one(), "w_scale", &[0.25, 1.0, 4.0, 16.0, 64.0]);
    assert_eq!(swept, alone);
    assert!(swept[0] && !swept[4], "{swept:?}");
    assert!(swept.windows(2).all(|w| w[0] || !w[1]), "{swept:?}");
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let mut doc = builtin_doc("t1_certified");
    doc["sweep"] = json!({"alpha_scale": []});
    let out = dir.path().join("out");
    let o = run("sweep", &write_doc(dir.path(), &doc), &out);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(text, "alpha_scale,certified,status,slack,sup_g,sup_h,error\n");
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for out in [a.path(), b.path()] {
        assert_eq!(run("simulate", &builtin("t1_certified"), out).status.code(), Some(0));
        assert_eq!(run("certify", &builtin("t1_certified"), out).status.code(), Some(0));
    }
    for f in ["trajectory.csv", "status.txt", "report.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_input_names_the_field() {
    let dir = TempDir::new().unwrap();
    let mut doc = builtin_doc("linear_decay");
    doc["tau"] = json!(-1.0);
    doc["colour"] = json!("red");
    let o = run("simulate", &write_doc(dir.path(), &doc), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("tau") && err.contains("colour"), "{err}");

    let o = bin().arg("simulate").output().unwrap();
    assert_eq!(o.status.code(), Some(4));
    let o = bin().arg("simulate").arg("--bogus").output().unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn overrides_change_the_run() {
    let out = TempDir::new().unwrap();
    let o = bin()
        .args(["simulate", "--horizon", "3", "--grid-step", "0.5", "--scenario"])
        .arg(builtin("linear_decay"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let ts: Vec<f64> = read_csv(&out.path().join("trajectory.csv")).iter().map(|r| cell(r, "t").unwrap()).collect();
    assert_eq!(ts, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
}

#[test]
fn selftest_passes() {
    let out = TempDir::new().unwrap();
    let o = bin().arg("selftest").arg("--out").arg(out.path()).output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}
