//! `engage`: annotator engagement prediction pipelines.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use engage_core::models::Variant;

/// Exit status for bad flags, unreadable or invalid input.
const EXIT_INPUT: u8 = 2;
/// Exit status for numeric failures: non-finite loss, undefined AUC,
/// failed gradient check.
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "engage",
    version,
    about = "Predict whether volunteers keep annotating within a session"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Summarize an annotation log: top-k share, group means, Welch t-test.
    Stats(StatsArgs),
    /// Split a log into sessions and report their sizes.
    Sessionize(SessionizeArgs),
    /// Sessionize a log and write the windowed dataset.
    Build(BuildArgs),
    /// Run the forward-chaining evaluation grid and write the AUC tables.
    Eval(EvalArgs),
    /// Generate a synthetic annotation log.
    Synth(SynthArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(clap::Args, Debug)]
struct LogInput {
    /// Annotation log (native CSV unless --zooniverse).
    #[arg(long)]
    log: PathBuf,
    /// Read a Zooniverse classification export instead of the native format.
    #[arg(long)]
    zooniverse: bool,
}

#[derive(clap::Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    input: LogInput,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    top_k: u64,
    /// Also write summary.json and manifest.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SessionizeArgs {
    #[command(flatten)]
    input: LogInput,
    /// Inactivity (minutes) that starts a new session.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(i64).range(1..))]
    gap_min: i64,
    /// Print sessions per user and the session size histogram as JSON.
    #[arg(long)]
    stats: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Policy {
    /// Only annotations with a full window of M deltas.
    Full,
    /// Every annotation; missing deltas are zero.
    Pad,
}

#[derive(clap::Args, Debug)]
struct BuildArgs {
    #[command(flatten)]
    input: LogInput,
    /// Delta window length.
    #[arg(long = "M", value_name = "M", default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    window: u64,
    /// Label is 1 when more than GAMMA annotations remain in the session.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    gamma: u32,
    /// Inactivity (minutes) that starts a new session.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(i64).range(1..))]
    gap_min: i64,
    #[arg(long, value_enum, default_value_t = Policy::Full)]
    emit_policy: Policy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Window {
    /// Train on all parts before the test part.
    Expanding,
    /// Train on the single part before the test part.
    Sliding,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).map_err(|_| format!("unknown model `{s}`; valid names: lstm, dnn, rf, lr"))
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    /// Annotation log to build the datasets from.
    #[arg(long)]
    dataset_log: PathBuf,
    #[arg(long)]
    zooniverse: bool,
    #[arg(long, value_delimiter = ',', default_value = "2,5,8,10,15,20,25,50,75", value_parser = clap::value_parser!(u32).range(1..))]
    gammas: Vec<u32>,
    #[arg(long = "Ms", value_name = "MS", value_delimiter = ',', default_value = "5,10", value_parser = clap::value_parser!(u64).range(1..))]
    windows: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "lstm,dnn,rf,lr", value_parser = parse_variant)]
    models: Vec<Variant>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(i64).range(1..))]
    gap_min: i64,
    #[arg(long, value_enum, default_value_t = Policy::Full)]
    emit_policy: Policy,
    #[arg(long, value_enum, default_value_t = Window::Expanding)]
    window: Window,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "ENGAGE_JOBS", value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Write every fitted model as JSON under OUT/models.
    #[arg(long)]
    save_models: bool,
    /// Write the test-fold ROC curves to OUT/roc.json.
    #[arg(long)]
    roc: bool,
    /// Exit with status 3 when any fold has a single-class test part.
    #[arg(long)]
    fail_on_degenerate: bool,
    #[arg(long)]
    out: PathBuf,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    users: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// How strongly a slowing pace raises the chance of ending a session.
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    signal: f64,
    /// CSV path; the generator config and manifest are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum NetKind {
    Lstm,
    Dnn,
}

#[derive(clap::Args, Debug)]
struct GradcheckArgs {
    #[arg(long, value_enum)]
    model: NetKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    /// Coordinates checked per parameter array.
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(1..))]
    per_tensor: u64,
    /// Rows in the random batch.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    rows: u64,
    #[arg(long = "M", value_name = "M", default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    window: u64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

/// An error that maps to exit status 3.
#[derive(Debug)]
struct NumericFailure(String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NumericFailure>().is_some() {
        return EXIT_NUMERIC;
    }
    match err.downcast_ref::<engage_core::Error>() {
        Some(e) if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stats(a) => commands::stats(a),
        Command::Sessionize(a) => commands::sessionize(a),
        Command::Build(a) => commands::build(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
