//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage, IO or validation errors, 2 when a
//! verification ran but one of its checks failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use robust_merton_core::{demo_cap_nonmonotonicity, solve, solve_portfolio, OpportunitySolution, Scenario};
use serde_json::{json, Value};

use crate::io::{self, num, to_json_string, IoError};
use crate::verify::{
    assess_sweep, check_saddle_mc, consumption_schedule, default_perturbations, linear_grid,
    sweep_comparative_statics, SimConfig, SweepParam, VerifyError,
};

pub const THREADS_ENV: &str = "ROBUST_MERTON_THREADS";

/// Points in the exported consumption schedule.
const SCHEDULE_POINTS: usize = 500;

#[derive(Parser, Debug)]
#[command(name = "robust-merton", version, about = "Robust consumption-investment with borrowing costs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Write the artifact here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Worst-case market, optimal portfolio and regime.
    Classify(Common),
    /// Opportunity exponent with segments and switching times.
    Solve(Common),
    /// Optimal consumption schedule.
    Consume(Common),
    /// Value function at the initial wealth.
    Value(Common),
    /// Monte Carlo check of the value and the saddle inequalities.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Comparative statics in one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of R, pi_lo, pi_hi, c_lo, c_hi, mu_lo, mu_hi, sigma_lo, sigma_hi.
        #[arg(long)]
        param: String,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long, default_value_t = 21)]
        steps: usize,
    },
    /// Witness that consumption is not monotone in its cap.
    DemoNm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cap_lo: f64,
        #[arg(long)]
        cap_hi: f64,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0}")]
    Core(#[from] robust_merton_core::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

struct Artifact {
    body: String,
    failed: bool,
}

fn json_artifact(v: &Value) -> Artifact {
    Artifact { body: to_json_string(v) + "\n", failed: false }
}

fn format_of(c: &Common, default: Format, allowed: &[Format], verb: &str) -> Result<Format, CliError> {
    let f = c.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(CliError::Usage(format!("--format {f:?} is not available for {verb}").to_lowercase()))
    }
}

fn load(c: &Common) -> Result<Scenario, CliError> {
    io::load_scenario_file(&c.scenario).map_err(|e| match e {
        IoError::Io(err) => CliError::Usage(format!("cannot read {}: {err}", c.scenario.display())),
        other => CliError::Io(other),
    })
}

fn execute(cmd: &Command) -> Result<Artifact, CliError> {
    const JSON: &[Format] = &[Format::Json];
    const BOTH: &[Format] = &[Format::Json, Format::Csv];
    match cmd {
        Command::Classify(c) => {
            format_of(c, Format::Json, JSON, "classify")?;
            Ok(json_artifact(&io::saddle_json(&solve_portfolio(&load(c)?)?)))
        }
        Command::Solve(c) => {
            format_of(c, Format::Json, JSON, "solve")?;
            let sol = solve(&load(c)?)?;
            Ok(json_artifact(&match &sol.opportunity {
                OpportunitySolution::Power(q) => io::qsolution_json(q),
                OpportunitySolution::Log(l) => io::log_solution_json(l),
            }))
        }
        Command::Consume(c) => {
            let f = format_of(c, Format::Csv, BOTH, "consume")?;
            let s = load(c)?;
            let sc = consumption_schedule(&s, &solve(&s)?)?;
            Ok(match f {
                Format::Csv => Artifact { body: io::schedule_csv(&sc, SCHEDULE_POINTS), failed: false },
                Format::Json => json_artifact(&io::schedule_json(&sc)),
            })
        }
        Command::Value(c) => {
            format_of(c, Format::Json, JSON, "value")?;
            let s = load(c)?;
            let sol = solve(&s)?;
            let mut v = json!({ "value": num(sol.value), "x0": num(s.x0), "q0": num(sol.opportunity.q(0.0)) });
            if let OpportunitySolution::Log(l) = &sol.opportunity {
                v["Q0"] = num(l.big_q0);
            }
            Ok(json_artifact(&v))
        }
        Command::Verify { common, paths, steps, seed } => {
            format_of(common, Format::Json, JSON, "verify")?;
            let s = load(common)?;
            let cfg = SimConfig { n_paths: *paths, n_steps: *steps, seed: *seed };
            cfg.validate()?;
            let perts = default_perturbations(&s, &solve(&s)?)?;
            let report = check_saddle_mc(&s, &perts, cfg)?;
            Ok(Artifact { failed: !report.passed(), ..json_artifact(&io::report_json(&report)) })
        }
        Command::Sweep { common, param, from, to, steps } => {
            let f = format_of(common, Format::Csv, BOTH, "sweep")?;
            let p = SweepParam::parse(param).ok_or_else(|| {
                CliError::Usage(format!("unknown --param `{param}`; expected one of R, pi_lo, pi_hi, c_lo, c_hi, mu_lo, mu_hi, sigma_lo, sigma_hi"))
            })?;
            if *steps < 2 {
                return Err(CliError::Usage("--steps must be at least 2".into()));
            }
            let s = load(common)?;
            let rows = sweep_comparative_statics(&s, p, &linear_grid(*from, *to, *steps))?;
            let checks = assess_sweep(&s, p, &rows);
            let failed = checks.iter().any(|c| !c.pass);
            Ok(match f {
                Format::Csv => Artifact { body: io::sweep_csv(&rows), failed },
                Format::Json => Artifact { failed, ..json_artifact(&io::sweep_json(&rows, &checks)) },
            })
        }
        Command::DemoNm { common, cap_lo, cap_hi } => {
            format_of(common, Format::Json, JSON, "demo-nm")?;
            let s = load(common)?;
            Ok(json_artifact(&io::witness_json(&demo_cap_nonmonotonicity(&s, *cap_lo, *cap_hi)?)))
        }
    }
}

fn output_of(cmd: &Command) -> Option<&Path> {
    let c = match cmd {
        Command::Classify(c) | Command::Solve(c) | Command::Consume(c) | Command::Value(c) => c,
        Command::Verify { common, .. } | Command::Sweep { common, .. } | Command::DemoNm { common, .. } => common,
    };
    c.output.as_deref()
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))
}

/// Runs one command, writing the artifact to `out` unless `--output` is given.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = thread_pool().and_then(|pool| pool.install(|| execute(&cli.command))).and_then(|a| {
        match output_of(&cli.command) {
            Some(path) => std::fs::write(path, &a.body)
                .map_err(|source| CliError::Write { path: path.display().to_string(), source })?,
            None => out
                .write_all(a.body.as_bytes())
                .map_err(|source| CliError::Write { path: "stdout".into(), source })?,
        }
        Ok(a.failed)
    });
    match result {
        Ok(false) => 0,
        Ok(true) => {
            let _ = writeln!(err, "error: verification failed");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
