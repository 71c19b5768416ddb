//! `polyspline`: fit, evaluate and gradient-check polyharmonic spline packages.
//!
//! Data goes to stdout, diagnostics to stderr. Exit status is 0 on success,
//! 1 on a failed command or check, 2 on usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "polyspline", version, about = "Packages and cascades of polyharmonic splines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a single-package model on a CSV dataset.
    Fit(FitArgs),
    /// Evaluate a model on the feature columns of a CSV file.
    Predict(PredictArgs),
    /// Compare analytic input gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Print the kernel constants b, c and the period T0 for a cutoff frequency.
    Constants(ConstantsArgs),
    /// Print per-layer dimensions, kernel constants and coefficient norms.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training CSV: feature columns followed by target columns.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of feature columns.
    #[arg(long, value_parser = positive_count)]
    pub features: usize,
    /// Number of target columns.
    #[arg(long, default_value_t = 1, value_parser = positive_count)]
    pub targets_cols: usize,
    /// Cutoff angular frequency.
    #[arg(long, value_parser = positive_real)]
    pub omega0: f64,
    /// Noise variance; 0 interpolates exactly.
    #[arg(long, value_parser = non_negative_real)]
    pub sigma2: f64,
    /// `data` (every training row), `subsample:<k>:<seed>`, or a CSV path
    /// holding center coordinates followed by their prescribed target values.
    #[arg(long, default_value = "data")]
    pub constellation: String,
    /// Skip the first line of every CSV input.
    #[arg(long)]
    pub has_header: bool,
    /// Where to write the model JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV whose leading columns are the model inputs.
    #[arg(long)]
    pub data: PathBuf,
    /// Trailing columns to ignore (e.g. targets in a training file).
    #[arg(long, default_value_t = 0)]
    pub targets_cols: usize,
    #[arg(long)]
    pub has_header: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Probe rows; random rows around the first constellation when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub targets_cols: usize,
    #[arg(long)]
    pub has_header: bool,
    /// Number of random probe rows.
    #[arg(long, default_value_t = 8, value_parser = positive_count)]
    pub probes: usize,
    /// Seed for random probe rows.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5, value_parser = positive_real)]
    pub step: f64,
    /// Differentiate the sum of all outputs when the last layer has several.
    #[arg(long)]
    pub sum_outputs: bool,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    #[arg(long, value_parser = positive_real)]
    pub omega0: f64,
    /// Evaluate b and c at this separation instead of the tau -> 0 limit.
    #[arg(long, value_parser = positive_real)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

fn parse_finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not finite: {s}"))
    }
}

fn positive_real(s: &str) -> Result<f64, String> {
    let v = parse_finite(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {s}"))
    }
}

fn non_negative_real(s: &str) -> Result<f64, String> {
    let v = parse_finite(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be non-negative, got {s}"))
    }
}

fn positive_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("not a count: {s}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => commands::run_fit(&args),
        Command::Predict(args) => commands::run_predict(&args),
        Command::Gradcheck(args) => commands::run_gradcheck(&args),
        Command::Constants(args) => commands::run_constants(&args),
        Command::Inspect(args) => commands::run_inspect(&args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
