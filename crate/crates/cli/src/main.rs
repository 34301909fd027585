//! `formation`: simulate scenarios, run the verification suite, solve step
//! parameters, and write the bundled example scenario.
//!
//! Exit status by outcome:
//!
//! | code | outcome                                                         |
//! |------|-----------------------------------------------------------------|
//! | 0    | success                                                         |
//! | 1    | I/O or parse error                                              |
//! | 2    | invalid configuration, violated hypothesis, infeasible delta    |
//! | 3    | per-step contraction certificate failed                         |
//! | 4    | simulation ended above the convergence threshold                |
//! | 5    | a checker found a counterexample                                |
//! | 6    | internal solver failure                                         |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use formation_core::polytope::SamplingPlan;
use formation_core::scenario::{Scenario, ScenarioConfig};
use formation_core::sim::{self, ParameterCertificate, QUOTED_DELTA_UPPER};
use formation_core::verify::{self, SuiteOutcome, SuiteReport, VerifyOptions};
use formation_core::{CouplingBounds, FormationError};
use log::info;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "formation", version, about = "Formation control under unknown frame rotations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write the trajectory table and a summary.
    Simulate {
        config: PathBuf,
        /// Output directory for `trajectory.csv` and `summary.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Attach a per-step contraction certificate; a failing one aborts.
        #[arg(long)]
        certificates: bool,
        /// Overrides the maximal step count.
        #[arg(long)]
        horizon: Option<usize>,
        /// Overrides the relative convergence threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run the checker suite for a scenario's graphs, angles and steps.
    Verify {
        config: PathBuf,
        /// Output directory for `verify.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed of the sampled checks.
        #[arg(long)]
        seed: Option<u64>,
        /// Steps covered by the certificate sweep (default: scenario horizon).
        #[arg(long)]
        horizon: Option<usize>,
        /// Hull samples per sampled check.
        #[arg(long, default_value_t = SamplingPlan::default().samples)]
        samples: usize,
    },
    /// Solve the step-size window for n agents and coupling bounds.
    Params {
        n: usize,
        alpha: f64,
        beta: f64,
        /// Target per-step contraction (default: 0.9 of the largest feasible).
        delta: Option<f64>,
        /// Upper end of a delta range to check for feasibility.
        #[arg(long, default_value_t = QUOTED_DELTA_UPPER)]
        range_upper: f64,
    },
    /// Write the bundled four-agent square scenario.
    Example {
        /// Destination file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Error(FormationError),
    NotConverged,
    Suite(SuiteOutcome),
}

impl From<FormationError> for Failure {
    fn from(e: FormationError) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn exit_code(f: &Failure) -> u8 {
    use FormationError::*;
    match f {
        Failure::NotConverged => 4,
        Failure::Suite(SuiteOutcome::CertificateFailure) => 3,
        Failure::Suite(SuiteOutcome::LemmaViolation) => 5,
        Failure::Suite(SuiteOutcome::Pass) => 0,
        Failure::Error(e) => match e {
            Io(_) | Parse(_) => 1,
            InvalidGraph(_)
            | InvalidBounds(_)
            | NotStochastic(_)
            | CouplingViolation(_)
            | HypothesisViolation(_)
            | InfeasibleParameters { .. }
            | ConfigInvalid(_)
            | DimensionTooLarge { .. }
            | IndexOutOfRange { .. }
            | InvalidArgument(_) => 2,
            CertificateFailure { .. } => 3,
            LemmaViolation(_) => 5,
            Infeasible { .. } | Lp(_) => 6,
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Error(e) => eprintln!("error: {e}"),
                Failure::NotConverged => eprintln!("error: simulation did not reach the convergence threshold"),
                Failure::Suite(o) => eprintln!("error: verification failed ({o:?})"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate { config, out, seed, certificates, horizon, threshold } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.record_certificates |= certificates;
            if let Some(h) = horizon {
                cfg.horizon.max_steps = h;
            }
            if let Some(t) = threshold {
                cfg.horizon.threshold = t;
            }
            simulate(&cfg.build()?, out.as_deref())
        }
        Command::Verify { config, out, seed, horizon, samples } => {
            let scenario = Scenario::load(&config)?;
            let plan = SamplingPlan { samples, seed: seed.unwrap_or(scenario.config.seed), ..SamplingPlan::default() };
            let opts = VerifyOptions { plan, certificate_steps: horizon, ..VerifyOptions::default() };
            let report = verify::run_suite(&scenario, &opts)?;
            print_suite(&report);
            let doc = SuiteDoc { config: &config, outcome: report.outcome(), report: &report };
            let json = to_json(&doc)?;
            write_output(out.as_deref(), "verify.json", &json)?;
            match report.outcome() {
                SuiteOutcome::Pass => Ok(()),
                other => Err(Failure::Suite(other)),
            }
        }
        Command::Params { n, alpha, beta, delta, range_upper } => params(n, alpha, beta, delta, range_upper),
        Command::Example { out } => {
            let text = ScenarioConfig::paper_sec4().to_toml_string()?;
            match out {
                Some(path) => fs::write(path, text)?,
                None => print_stdout(text.trim_end()),
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SuiteDoc<'a> {
    config: &'a Path,
    outcome: SuiteOutcome,
    #[serde(flatten)]
    report: &'a SuiteReport,
}

fn print_suite(report: &SuiteReport) {
    for r in &report.reports {
        eprintln!("{}", r.summary());
    }
    eprintln!("{}", report.certificates.summary());
}

fn simulate(scenario: &Scenario, out: Option<&Path>) -> Result<(), Failure> {
    if scenario.config.verify_before_run {
        let report = verify::run_suite(scenario, &VerifyOptions::default())?;
        print_suite(&report);
        if !report.pass() {
            return Err(Failure::Suite(report.outcome()));
        }
    }
    let log = sim::run(&scenario.simulation)?;
    let report = sim::convergence_report(&log);
    info!("{} steps, final pairwise error {:e}", report.steps, report.final_error);
    let summary = to_json(&SimulationSummary::from(&report))?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        log.write_csv(fs::File::create(dir.join("trajectory.csv"))?)?;
    }
    write_output(out, "summary.json", &summary)?;
    if report.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

/// The convergence report without the per-step ratio list.
#[derive(Serialize)]
struct SimulationSummary<'a> {
    steps: usize,
    converged: bool,
    initial_error: f64,
    final_error: f64,
    final_shape_error: f64,
    max_ratio: Option<f64>,
    ratios_above_one_minus_delta: usize,
    steps_above_step_bound: usize,
    first_step_above_step_bound: Option<usize>,
    bound_violations: usize,
    empirical_rate: Option<f64>,
    theoretical_rate: f64,
    params: &'a ParameterCertificate,
}

impl<'a> From<&'a sim::ConvergenceReport> for SimulationSummary<'a> {
    fn from(r: &'a sim::ConvergenceReport) -> Self {
        Self {
            steps: r.steps,
            converged: r.converged,
            initial_error: r.initial_error,
            final_error: r.final_error,
            final_shape_error: r.final_shape_error,
            max_ratio: r.max_ratio,
            ratios_above_one_minus_delta: r.ratios_above_one_minus_delta,
            steps_above_step_bound: r.steps_above_step_bound,
            first_step_above_step_bound: r.first_step_above_step_bound,
            bound_violations: r.bound_violations,
            empirical_rate: r.empirical_rate,
            theoretical_rate: r.theoretical_rate,
            params: &r.params,
        }
    }
}

#[derive(Serialize)]
struct ParamsDoc {
    #[serde(flatten)]
    certificate: ParameterCertificate,
    max_rate: f64,
    range_check: sim::RangeNote,
}

fn params(n: usize, alpha: f64, beta: f64, delta: Option<f64>, range_upper: f64) -> Result<(), Failure> {
    let bounds = CouplingBounds::new(alpha, beta)?;
    if n < 2 {
        return Err(FormationError::InvalidArgument(format!("need n >= 2, got {n}")).into());
    }
    let delta = delta.unwrap_or_else(|| sim::default_delta(n, &bounds));
    let cert = ParameterCertificate::evaluate(n, &bounds, delta)?;
    let note = cert.range_note(range_upper);
    if !note.feasible {
        eprintln!("note: {}", note.message);
    }
    let doc = ParamsDoc { certificate: cert, max_rate: cert.max_rate(), range_check: note };
    print_stdout(&to_json(&doc)?);
    if cert.feasible {
        Ok(())
    } else {
        eprintln!("largest feasible delta: {}", cert.max_delta);
        Err(FormationError::InfeasibleParameters { delta, max_delta: cert.max_delta }.into())
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Error(FormationError::Parse(e.to_string())))
}

/// A closed pipe (`formation params ... | head`) is not an error.
fn print_stdout(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// Prints to stdout, and also writes `dir/name` when a directory is given.
fn write_output(dir: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    print_stdout(text);
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), format!("{text}\n"))?;
    }
    Ok(())
}
