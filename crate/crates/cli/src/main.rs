//! `heca`: run forecast-combination experiments from the command line.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use heca_core::experiment::{run_experiment, ExperimentConfig};
use heca_core::panel::write_panel_csv;
use heca_core::synthetic::{emit_synthetic, SyntheticSpec};
use heca_core::HecaError;

/// Combine expert forecasts through egalitarian committees and an online
/// hedge aggregator.
///
/// Settings are read from `--config` (flat `key = value` lines using the flag
/// names below) and then overridden by explicit flags.
#[derive(Debug, Parser)]
#[command(name = "heca", version)]
struct Cli {
    /// Key = value settings file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Panel CSV: period, target, then one column per expert.
    #[arg(long, value_name = "PATH")]
    data: Option<String>,

    /// Data span as START:END period labels, e.g. 2012Q1:2019Q4.
    #[arg(long)]
    span: Option<String>,

    /// heca, heca-delayed, efp, efp-delayed, hedge, hedge-delayed or equal-weight.
    #[arg(long)]
    algo: Option<String>,

    /// Estimation window length r.
    #[arg(long)]
    window: Option<String>,

    /// Validation window length for picking the shrinkage parameter.
    #[arg(long)]
    val_window: Option<String>,

    /// Shrinkage grid as lo:step:hi.
    #[arg(long)]
    lambda_grid: Option<String>,

    /// Reporting lag l between forecast and realization.
    #[arg(long)]
    lag: Option<String>,

    /// Lower bound on committee member weights.
    #[arg(long)]
    epsilon: Option<String>,

    /// Initial loss-bound guess: "auto" or a positive number.
    #[arg(long)]
    b1: Option<String>,

    /// Subset search backend: exhaustive or branch-bound.
    #[arg(long)]
    backend: Option<String>,

    /// Output directory (or output file with --emit-synthetic).
    #[arg(long, value_name = "PATH")]
    out: Option<String>,

    /// Write a seeded synthetic panel instead of running an experiment,
    /// e.g. "experts=6,horizon=60,noise=0.2,seed=7,breaks=30".
    #[arg(long, value_name = "SPEC")]
    emit_synthetic: Option<String>,

    /// Print an aligned comparison table instead of the JSON summary.
    #[arg(long)]
    pretty: bool,

    /// Accept a lag that does not match the algorithm's feedback delay.
    #[arg(long)]
    force_lag: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("heca: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), HecaError> {
    configure_threads()?;

    if let Some(spec) = &cli.emit_synthetic {
        let panel = emit_synthetic(&spec.parse::<SyntheticSpec>()?)?;
        return match &cli.out {
            Some(path) => write_panel_csv(&panel, fs::File::create(path)?),
            None => write_panel_csv(&panel, io::stdout().lock()),
        };
    }

    let mut config = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        config.apply_text(&fs::read_to_string(path)?)?;
    }
    let overrides = [
        ("data", &cli.data),
        ("span", &cli.span),
        ("algo", &cli.algo),
        ("window", &cli.window),
        ("val-window", &cli.val_window),
        ("lambda-grid", &cli.lambda_grid),
        ("lag", &cli.lag),
        ("epsilon", &cli.epsilon),
        ("b1", &cli.b1),
        ("backend", &cli.backend),
        ("out", &cli.out),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            config.set(key, v)?;
        }
    }
    if cli.force_lag {
        config.force_lag = true;
    }

    let report = run_experiment(&config)?;
    let mut stdout = io::stdout().lock();
    if cli.pretty {
        stdout.write_all(report.render_pretty().as_bytes())?;
    } else {
        stdout.write_all(report.summary_json()?.as_bytes())?;
    }
    Ok(())
}

/// Caps the worker pool at `HECA_THREADS` when set.
fn configure_threads() -> Result<(), HecaError> {
    let Ok(raw) = std::env::var("HECA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| HecaError::Validation(format!("HECA_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HecaError::ResourceExceeded(format!("cannot start {n} worker threads: {e}")))
}
