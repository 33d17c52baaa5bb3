use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod config;
mod manifest;

/// Revealed-preference consistency, power and estimation in batch.
///
/// `--config FILE` reads `key = value` lines naming any flag of the
/// subcommand; flags given on the command line take precedence.
#[derive(Debug, Parser)]
#[command(name = "revpref", version)]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// CCEI, HMI, MPI and MCI per dataset.
    Indices(IndicesArgs),
    /// Random-chooser benchmark and Selten score per dataset.
    Power(PowerArgs),
    /// Share-permutation test per dataset.
    Permtest(PermtestArgs),
    /// Monthly budget datasets from a transaction log.
    Etl(EtlArgs),
    /// CES or disappointment-aversion fit per dataset.
    Estimate(EstimateArgs),
    /// Behavioral metrics per consumer.
    Analyze(AnalyzeArgs),
    /// Correlate two columns of two metric files joined on label.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct Inputs {
    /// Dataset files or directories of them (.csv or .json).
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub input: Vec<PathBuf>,

    /// Output file.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IndicesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: Inputs,

    /// Add homothetic, quasilinear, FOSD and GAPP efficiency columns.
    #[arg(long)]
    pub restrictions: bool,

    /// Node budget of the exact HMI and MCI searches.
    #[arg(long, default_value_t = 10_000_000)]
    pub node_cap: u64,

    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    Discrete,
    Shares,
}

#[derive(Debug, Args, Serialize)]
pub struct PowerArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: Inputs,

    #[arg(long, default_value_t = 1000)]
    pub sims: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_enum, default_value_t = PowerMode::Discrete)]
    pub mode: PowerMode,

    /// Allocation options per budget in discrete mode.
    #[arg(long, default_value_t = 11)]
    pub options: usize,

    /// Regress observed on simulated CCEI for the power-adjusted column.
    #[arg(long)]
    pub reverse_regression: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PermtestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: Inputs,

    #[arg(long, default_value_t = 10_000)]
    pub perms: usize,

    #[arg(long, default_value_t = 0.2)]
    pub abort_threshold: f64,

    #[arg(long, default_value_t = 1000)]
    pub abort_check_at: usize,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceBasisArg {
    Final,
    Shelf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ScenarioArg {
    Season,
    Year,
    WorkingDay,
    MealTime,
    Discount,
}

#[derive(Debug, Args, Serialize)]
pub struct EtlArgs {
    /// Transaction CSV.
    #[arg(long)]
    pub input: PathBuf,

    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,

    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub categories: Vec<String>,

    /// Month range `YYYY-MM:YYYY-MM`.
    #[arg(long)]
    pub window: String,

    /// Keep consumers with this many consecutive months.
    #[arg(long)]
    pub require_consecutive: Option<usize>,

    /// Skip malformed rows instead of failing.
    #[arg(long)]
    pub lenient: bool,

    #[arg(long, value_enum, default_value_t = PriceBasisArg::Final)]
    pub price_basis: PriceBasisArg,

    /// Keep only these subcategories.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub subcategory: Option<Vec<String>>,

    /// Split records by scenario before aggregating.
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,

    /// Holiday calendar CSV (`date,label`) for the working-day split.
    #[arg(long)]
    pub calendar: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Ces,
    Da,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: Inputs,

    #[arg(long, value_enum, default_value_t = ModelArg::Ces)]
    pub model: ModelArg,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["input", "transactions", "s1"])))]
pub struct AnalyzeArgs {
    /// Dataset files or directories: per-dataset choice metrics.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub input: Vec<PathBuf>,

    /// Transaction CSV: shopping-time volatility and discount metrics.
    #[arg(long, requires = "year")]
    pub transactions: Option<PathBuf>,

    /// First-scenario datasets, paired by label with `--s2`.
    #[arg(long, requires = "s2")]
    pub s1: Option<PathBuf>,

    #[arg(long, requires = "s1")]
    pub s2: Option<PathBuf>,

    #[arg(long)]
    pub year: Option<i32>,

    /// Random splits for the CCEI_diff benchmark.
    #[arg(long, default_value_t = 100)]
    pub splits: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Middle-chooser rule needs only a majority of qualifying rounds.
    #[arg(long)]
    pub majority: bool,

    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestArg {
    Spearman,
    PairedT,
}

#[derive(Debug, Args, Serialize)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub left: PathBuf,

    #[arg(long)]
    pub right: PathBuf,

    #[arg(long)]
    pub left_column: String,

    #[arg(long)]
    pub right_column: String,

    #[arg(long, value_enum, default_value_t = TestArg::Spearman)]
    pub test: TestArg,

    #[arg(long)]
    pub output: PathBuf,
}

/// Failure of a run, mapped to an exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(revpref::Error),
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(revpref::Error::SearchBudgetExceeded { .. }) => 3,
            CliError::Data(_) | CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(revpref::Error::SearchBudgetExceeded { .. }) => "resource_cap",
            CliError::Data(_) => "data",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Io(m) => m.clone(),
            CliError::Data(e) => e.to_string(),
        }
    }
}

impl From<revpref::Error> for CliError {
    fn from(err: revpref::Error) -> Self {
        CliError::Data(err)
    }
}

fn fail(err: CliError) -> ExitCode {
    let body = serde_json::json!({
        "error": err.kind(),
        "message": err.message(),
        "exit_code": err.exit_code(),
    });
    eprintln!("{body}");
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let args = match config::apply(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            return fail(CliError::Usage("--jobs must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(CliError::Usage(e.to_string()));
        }
    }
    let result = match &cli.command {
        Command::Indices(a) => commands::indices(a),
        Command::Power(a) => commands::power(a),
        Command::Permtest(a) => commands::permtest(a),
        Command::Etl(a) => commands::etl(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Correlate(a) => commands::correlate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
