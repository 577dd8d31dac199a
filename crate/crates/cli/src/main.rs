use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use mfc_core::controllers::ControllerKind;
use mfc_core::simkit::builtin_scenarios;
use mfc_lab::config::{ExperimentConfig, Grid, Override};
use mfc_lab::experiment::{execute, Summary};
use mfc_lab::output::write_string;
use mfc_lab::plot;
use mfc_lab::validate::{validate_estimators, ValidationSettings};

#[derive(Parser)]
#[command(
    name = "mfc-lab",
    version,
    about = "Closed-loop vehicle controller experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenarios of a config file or one built-in scenario.
    Run(Source),
    /// Run a scenario for every adhesion and controller and tabulate errors.
    Compare(CompareArgs),
    /// Check the algebraic estimators against synthetic data with known F.
    ValidateEstimators(ValidateArgs),
    /// Extract (t, value, reference) files from a trace CSV.
    Plotdata(PlotArgs),
    /// List the built-in scenarios.
    ListScenarios {
        /// Print each scenario as resolved JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Source {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Set a scenario key, e.g. `mu=0.3` or `vehicle.m_kg=1500`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel runs; 0 uses all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: Source,
    /// Adhesion values.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.7])]
    mu: Vec<f64>,
    /// Controllers (mfc, flat, pid).
    #[arg(long, value_delimiter = ',', default_values_t = ControllerKind::ALL.map(|c| c.name().to_string()))]
    controllers: Vec<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 0.25)]
    tau_s: f64,
    #[arg(long, default_value_t = 200.0)]
    fs_hz: f64,
    #[arg(long, default_value_t = 1.5)]
    alpha_long: f64,
    #[arg(long, default_value_t = 1.95)]
    alpha_lat: f64,
    /// Also write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Trace CSV written by `run`.
    trace: PathBuf,
    /// Channels to extract; all when omitted.
    #[arg(long, value_delimiter = ',')]
    channels: Vec<String>,
    #[arg(long, default_value = "plot")]
    out: PathBuf,
}

fn load(src: &Source, default_scenario: Option<&str>) -> Result<ExperimentConfig> {
    let overrides = src
        .overrides
        .iter()
        .map(|s| Override::parse(s))
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = match (&src.config, src.scenario.as_deref().or(default_scenario)) {
        (Some(path), _) => ExperimentConfig::load(path, &overrides)?,
        (None, Some(name)) => ExperimentConfig::from_name(name, &overrides)?,
        (None, None) => bail!("either --config or --scenario is required"),
    };
    if let Some(out) = &src.out {
        cfg.output_dir = out.clone();
    }
    if let Some(jobs) = src.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn finish(summary: &Summary) -> ExitCode {
    print!("{}", summary.to_text());
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    if summary.all_completed() {
        ExitCode::SUCCESS
    } else {
        let failed = summary
            .runs
            .iter()
            .filter(|r| !r.verdict.is_completed())
            .count();
        eprintln!("{failed} of {} runs did not complete", summary.runs.len());
        ExitCode::from(1)
    }
}

fn main_inner(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(src) => Ok(finish(&execute(&load(&src, None)?)?)),
        Command::Compare(args) => {
            let controllers = args
                .controllers
                .iter()
                .map(|c| c.parse::<ControllerKind>())
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = load(&args.source, Some("tracklike_mfc"))?.with_grid(Grid {
                mu: args.mu,
                controllers,
            })?;
            Ok(finish(&execute(&cfg)?))
        }
        Command::ValidateEstimators(a) => {
            let report = validate_estimators(&ValidationSettings {
                tau_s: a.tau_s,
                fs_hz: a.fs_hz,
                alpha_long: a.alpha_long,
                alpha_lat: a.alpha_lat,
            })?;
            print!("{}", report.to_text());
            if let Some(out) = a.out {
                write_string(&out, &serde_json::to_string_pretty(&report)?)?;
                println!("wrote {}", out.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plotdata(a) => {
            let channels = plot::select(&a.channels)?;
            let rows = plot::read_trace(&a.trace)?;
            let names: Vec<String> = channels.iter().map(|c| c.name.to_string()).collect();
            for path in plot::emit(&rows, &names, &a.out)? {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ListScenarios { json } => {
            let mut out = io::stdout().lock();
            for s in builtin_scenarios() {
                let line = if json {
                    serde_json::to_string(&s)?
                } else {
                    format!("{:<20} controller={:<5} mu={}", s.name, s.controller, s.mu)
                };
                match writeln!(out, "{line}") {
                    Err(e) if e.kind() == io::ErrorKind::BrokenPipe => break,
                    other => other?,
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
