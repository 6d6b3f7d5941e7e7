use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use rbm_core::artifacts::{ab_csv, curve_from_frames, evaluate, initial_curves, run_scenario, CURVES_FILE};
use rbm_core::config::ScenarioConfig;
use rbm_core::relcurve::ReliabilityCurve;
use rbm_core::simulator::{ab_compare, RunOptions};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Reliability-based monitoring of a redundant software system.
#[derive(Debug, Parser)]
#[command(name = "rbm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario with the monitor attached and write the run artifacts.
    Run {
        /// Scenario file (TOML). Built-in defaults when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario duration, in hours.
        #[arg(long)]
        duration: Option<f64>,
        /// Raise alarms but never rejuvenate.
        #[arg(long)]
        no_rejuvenation: bool,
    },
    /// Write the a-priori subsystem and system curves.
    InitCurves {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Output directory; prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate residual reliability, failure probability and RUL on a stored curve.
    Eval {
        /// A `curves.csv` from `run`/`init-curves`, or a `t_hours,value` file.
        #[arg(long)]
        curves: PathBuf,
        /// Column of `curves.csv` to evaluate.
        #[arg(long, default_value = "system")]
        column: String,
        /// Evaluation time; defaults to the frame's current time (or 0).
        #[arg(long)]
        t_now: Option<f64>,
        /// Scenario providing the prediction tuples.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Paired comparison of runs with and without predictive rejuvenation.
    Ab {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Number of paired seeds.
        #[arg(long, default_value_t = 50)]
        seeds: u64,
        /// First seed; seeds are consecutive.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        duration: Option<f64>,
        /// Also write `ab.csv` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig> {
    Ok(match path {
        Some(p) => ScenarioConfig::load(p).map_err(|e| match e {
            rbm_core::Error::Io(io) => rbm_core::Error::Config {
                field: "--scenario".into(),
                message: format!("cannot read {}: {io}", p.display()),
            },
            other => other,
        })?,
        None => ScenarioConfig::default(),
    })
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            scenario,
            seed,
            out,
            duration,
            no_rejuvenation,
        } => {
            let scenario = load_scenario(scenario.as_deref())?;
            let mut options = RunOptions::new(
                seed.unwrap_or(scenario.seed),
                duration.unwrap_or(scenario.duration_hours),
            );
            options.rejuvenation = !no_rejuvenation;
            let (trace, artifacts) = run_scenario(&scenario, options)?;
            artifacts
                .write_to(&out)
                .with_context(|| format!("cannot write artifacts to {}", out.display()))?;
            let s = &trace.stats;
            emit(&format!(
                "{}: seed {} over {} h, availability {:.6}, {} failures, {} rejuvenations, {} system losses -> {}\n",
                scenario.name,
                s.seed,
                s.duration_hours,
                s.availability,
                s.failures,
                s.rejuvenations,
                s.system_losses,
                out.display()
            ))?;
        }
        Command::InitCurves { scenario, out } => {
            let scenario = load_scenario(scenario.as_deref())?;
            let csv = initial_curves(&scenario)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join(CURVES_FILE), csv)
                        .with_context(|| format!("cannot write {}", dir.display()))?;
                }
                None => emit(&csv)?,
            }
        }
        Command::Eval {
            curves,
            column,
            t_now,
            scenario,
        } => {
            let scenario = load_scenario(scenario.as_deref())?;
            let text = std::fs::read_to_string(&curves)
                .with_context(|| format!("cannot read {}", curves.display()))?;
            let (curve, frame_now) = if text.starts_with("t_hours,") {
                (ReliabilityCurve::from_csv(&text)?, 0.0)
            } else {
                curve_from_frames(&text, &column)?
            };
            let report = evaluate(&curve, t_now.unwrap_or(frame_now), &scenario.monitor().tuples)?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&report)?))?;
        }
        Command::Ab {
            scenario,
            seeds,
            seed,
            duration,
            out,
        } => {
            let scenario = load_scenario(scenario.as_deref())?;
            if seeds == 0 {
                return Err(rbm_core::Error::Config {
                    field: "--seeds".into(),
                    message: "must be at least 1".into(),
                }
                .into());
            }
            let list: Vec<u64> = (seed..seed + seeds).collect();
            let report = ab_compare(&scenario.simulation, &list, duration.unwrap_or(scenario.duration_hours))?;
            let table = ab_csv(&report);
            emit(&table)?;
            emit(&format!(
                "# mean availability {:.6} with RBM vs {:.6} without; losses no worse in {:.0}% of pairs\n",
                report.mean_availability_with,
                report.mean_availability_without,
                report.loss_dominance * 100.0
            ))?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("ab.csv"), table)?;
            }
        }
    }
    Ok(())
}

fn report_error(err: &anyhow::Error) -> u8 {
    let (code, value) = match err.downcast_ref::<rbm_core::Error>() {
        Some(rbm_core::Error::Config { field, message }) => (
            EXIT_CONFIG,
            json!({"error": "config", "field": field, "message": message}),
        ),
        _ => (EXIT_RUNTIME, json!({"error": "runtime", "message": format!("{err:#}")})),
    };
    eprintln!("{value}");
    code
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({"error": "usage", "message": first}));
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(report_error(&e)),
    }
}
