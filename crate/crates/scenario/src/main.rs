use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delaybound_scenario::load::{load_value, Overrides};
use delaybound_scenario::run::{self, Exit, RunError};
use serde_json::Value;

/// Bounds and stability certificates for delay equations
/// `u' = A(t)u + G(t, u(t - tau)) + f(t)`.
///
/// Exit codes: 0 success or certified, 1 I/O or selftest failure, 2 valid run
/// but certificate not established, 3 numerical failure (blow-up or step
/// underflow), 4 invalid input.
#[derive(Parser)]
#[command(name = "delaybound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the system and the comparison equation; write trajectory.csv.
    Simulate(Common),
    /// Check the scenario's certificate; write report.json.
    Certify(Common),
    /// Certify every point of the scenario's sweep grid; write summary.csv.
    Sweep(Common),
    /// Run the built-in scenarios twice and compare outputs and exit codes.
    Selftest(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Relative integration tolerance (absolute tolerance is 1e-3 of it).
    #[arg(long)]
    tol: Option<f64>,
    /// Output and certificate grid spacing.
    #[arg(long = "grid-step")]
    grid_step: Option<f64>,
    /// Seed for randomized majorant checks.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            horizon: self.horizon,
            tol: self.tol,
            grid_step: self.grid_step,
            seed: self.seed,
            ..Overrides::default()
        }
    }

    fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn document(&self) -> Result<Value, Failure> {
        let Some(path) = &self.scenario else {
            return Err(Failure(Exit::Invalid, "--scenario <path> is required".into()));
        };
        let text = fs::read_to_string(path).map_err(|e| Failure(Exit::Failure, format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            Failure(
                Exit::Invalid,
                format!("{}: malformed JSON at line {}, column {}: {e}", path.display(), e.line(), e.column()),
            )
        })
    }
}

struct Failure(Exit, String);

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure(e.exit(), e.to_string())
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn execute(cmd: Command) -> Result<Exit, Failure> {
    match cmd {
        Command::Simulate(c) => {
            let doc = c.document()?;
            let s = load_value(&doc, &c.overrides()).map_err(RunError::from)?;
            warn_all(&s.warnings);
            let out = c.out();
            let r = run::simulate(&s, &out)?;
            for line in &r.status {
                println!("{line}");
            }
            println!("wrote {} rows to {}", r.rows, out.join("trajectory.csv").display());
            Ok(r.exit)
        }
        Command::Certify(c) => {
            let doc = c.document()?;
            let s = load_value(&doc, &c.overrides()).map_err(RunError::from)?;
            warn_all(&s.warnings);
            let out = c.out();
            let r = run::certify(&s, &out)?;
            println!("{} {}: {}", r.scenario, r.theorem, r.status);
            if let Some(reason) = &r.reason {
                println!("{reason}");
            }
            println!("wrote {}", out.join("report.json").display());
            Ok(r.exit())
        }
        Command::Sweep(c) => {
            let doc = c.document()?;
            let r = run::sweep(&doc, &c.overrides(), &c.out())?;
            println!("{} row(s), {} with errors; wrote {}", r.rows, r.failed_rows, r.summary.display());
            Ok(Exit::Success)
        }
        Command::Selftest(c) => {
            let out = c
                .out
                .clone()
                .unwrap_or_else(|| std::env::temp_dir().join(format!("delaybound-selftest-{}", std::process::id())));
            let lines = run::selftest(Path::new(&out), &c.overrides());
            let mut ok = true;
            for l in &lines {
                println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
                ok &= l.passed;
            }
            Ok(if ok { Exit::Success } else { Exit::Failure })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Invalid.code() as u8 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(e) => ExitCode::from(e.code() as u8),
        Err(Failure(e, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(e.code() as u8)
        }
    }
}
