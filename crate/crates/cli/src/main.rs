//! `odex`: fit Gamma GLMs, search augmentation designs and compare them.

mod commands;
mod inputs;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use odex::bundled::GammaGrid;
use odex::estimation::{FitError, Metric};
use odex::Flavor;

pub const USAGE: u8 = 1;
pub const PARSE: u8 = 2;
pub const FIT: u8 = 3;
pub const CACHE: u8 = 4;
pub const DIMENSION: u8 = 5;
pub const DOMAIN: u8 = 6;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn msg(code: u8, message: impl fmt::Display) -> Self {
        Self::new(code, anyhow::anyhow!("{message}"))
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

pub trait OrExit<T> {
    fn or_exit(self, code: u8) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Outcome<T> {
        self.map_err(|e| Failure::new(code, e))
    }
}

pub fn fit_code(e: &FitError) -> u8 {
    match e {
        FitError::Divergence { .. } | FitError::RankDeficient | FitError::TooFewRuns { .. } => FIT,
        FitError::PredictorOutOfDomain { .. } | FitError::MissingDayEffect { .. } => DOMAIN,
        FitError::UnknownResponse(_) => PARSE,
        FitError::Incomparable(_) => DIMENSION,
    }
}

#[derive(Debug, Parser)]
#[command(name = "odex", version, about = "Optimal augmentation designs for Gamma GLMs with a day effect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a Gamma GLM and print its coefficient table.
    Fit(FitArgs),
    /// Search an m-run augmentation design.
    Design(DesignArgs),
    /// Efficiency of a design against local optima or another design.
    Efficiency(EfficiencyArgs),
    /// Predict responses with a fitted model and score the predictions.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Bundled response to fit with its bundled model (data defaults to @ccd30).
    #[arg(long, conflicts_with = "model")]
    pub bundled: Option<String>,
    /// Dataset CSV, or `@ccd30`, `@ccd30+reference`, `@ccd30+bayes`, `@validation14`.
    #[arg(long)]
    pub data: Option<String>,
    /// Model JSON file or bundled model name.
    #[arg(long)]
    pub model: Option<String>,
    /// Override the model's link.
    #[arg(long)]
    pub link: Option<String>,
    /// Response column; defaults to the model name.
    #[arg(long)]
    pub response: Option<String>,
    /// Fit a day effect even when every run is on the initial day.
    #[arg(long)]
    pub day_effect: bool,
    /// Write the fitted model as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Criterion {
    #[value(name = "D")]
    D,
    #[value(name = "D1")]
    D1,
    #[value(name = "bayesD")]
    BayesD,
    #[value(name = "bayesD1")]
    BayesD1,
    #[value(name = "compromise")]
    Compromise,
}

impl Criterion {
    pub fn local_flavor(self) -> Option<Flavor> {
        match self {
            Criterion::D => Some(Flavor::D),
            Criterion::D1 => Some(Flavor::D1),
            _ => None,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

/// The scenarios a design is judged under.
#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Comma-separated bundled models.
    #[arg(long, conflicts_with = "ensemble")]
    pub models: Option<String>,
    /// Day-effect grid around each model's bundled value.
    #[arg(long, default_value = "fixed", value_parser = parse_grid)]
    pub gammas: GammaGrid,
    /// Ensemble JSON: `{"scenarios": [{"model", "beta", "gamma", "weight"}], "m"}`.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// PSO configuration JSON; the flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub swarm: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub criterion: Criterion,
    /// Weight of the D part of the compromise criterion.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Number of later-day runs.
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub scenarios: ScenarioArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Design CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report with the criterion value and per-scenario efficiencies.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimaSource {
    /// Published locally optimal 4-run designs of the bundled models.
    Published,
    /// Search the local optima with PSO.
    Search,
}

#[derive(Debug, Args)]
pub struct EfficiencyArgs {
    /// Design CSV or `@name` of a bundled design.
    #[arg(long)]
    pub design: String,
    /// Report the ratio against this design instead of the local optima.
    #[arg(long)]
    pub relative_to: Option<String>,
    #[arg(long, default_value = "D", value_parser = parse_flavor)]
    pub flavor: Flavor,
    /// Single bundled model; shorthand for `--models`.
    #[arg(long, conflicts_with_all = ["models", "ensemble"])]
    pub model: Option<String>,
    #[command(flatten)]
    pub scenarios: ScenarioArgs,
    #[arg(long, value_enum, default_value_t = OptimaSource::Published)]
    pub optima: OptimaSource,
    #[command(flatten)]
    pub search: SearchArgs,
    /// JSON report destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fitted model JSON written by `fit --out`.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset CSV or `@name`.
    #[arg(long)]
    pub data: String,
    /// Response column; defaults to the one the model was fitted to.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, default_value = "mse", value_parser = parse_metric)]
    pub metric: Metric,
    /// Per-run CSV destination: run, observed, predicted, residual.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<GammaGrid, String> {
    s.parse()
}

fn parse_flavor(s: &str) -> Result<Flavor, String> {
    s.parse()
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse()
}

fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("ODEX_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::msg(USAGE, format!("ODEX_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .or_exit(USAGE)
}

fn run(cli: Cli) -> Outcome {
    configure_threads()?;
    match cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Design(args) => commands::design(args),
        Command::Efficiency(args) => commands::efficiency(args),
        Command::Predict(args) => commands::predict(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
