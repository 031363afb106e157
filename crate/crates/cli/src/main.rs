//! `narx`: train, simulate, sweep and evaluate NARX forecasters on OHLCV CSV data.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 invalid data or configuration,
//! 5 training divergence, 6 model/data mismatch, 7 model rejected by `eval`.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use narx::data::{Channel, LagSet};
use narx::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot access {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] narx::Error),
    #[error("model rejected: {}", .0.join("; "))]
    Rejected(Vec<String>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Rejected(_) => 7,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Io => 3,
                ErrorKind::Validation => 4,
                ErrorKind::Divergence => 5,
                ErrorKind::Mismatch => 6,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "narx",
    version,
    about = "NARX neural-network forecasting for OHLCV time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network (with restarts) and save it with its reports.
    Train(TrainArgs),
    /// Run a saved network in closed loop over a forecast horizon.
    Simulate(SimulateArgs),
    /// Grid-search delays and neuron counts.
    Sweep(SweepArgs),
    /// Open-loop diagnostics and acceptance verdict for a saved network.
    Eval(EvalArgs),
}

#[derive(Debug, Args, serde::Serialize)]
pub struct DataArgs {
    /// OHLCV CSV file (Date,Open,High,Low,Volume,Close[,Adj Close]).
    #[arg(long)]
    pub csv: PathBuf,
    /// First date to use (ISO date or serial day number), inclusive.
    #[arg(long, value_parser = parse_date)]
    pub from: Option<i64>,
    /// Last date to use, inclusive.
    #[arg(long, value_parser = parse_date)]
    pub to: Option<i64>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct ChannelArgs {
    /// Exogenous input channels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "open,high,low,volume")]
    pub exo_channels: Vec<Channel>,
    /// Target (and feedback) channel.
    #[arg(long, default_value = "close")]
    pub target: Channel,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct ParamArgs {
    /// JSON file with training parameters; individual flags override it.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Performance ratio weighting MSE against mean squared weights.
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub mu_dec: Option<f64>,
    #[arg(long)]
    pub mu_inc: Option<f64>,
    #[arg(long)]
    pub mu_max: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub goal: Option<f64>,
    #[arg(long)]
    pub min_grad: Option<f64>,
    #[arg(long)]
    pub max_fail: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Also penalize biases in the weight term.
    #[arg(long)]
    pub regularize_biases: bool,
    /// Master seed; restart i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct DiagArgs {
    /// Largest correlation lag reported.
    #[arg(long, default_value_t = 20)]
    pub max_lag: usize,
    /// Minimum regression R for acceptance.
    #[arg(long, default_value_t = 0.99)]
    pub r_min: f64,
    /// Maximum divergence, percent of the actual price.
    #[arg(long, default_value_t = 10.0)]
    pub max_divergence: f64,
    /// Maximum MSE in price units (unchecked by default).
    #[arg(long)]
    pub mse_max: Option<f64>,
    /// Fraction of input-error cross-correlation lags allowed outside the band.
    #[arg(long, default_value_t = 0.05)]
    pub max_excursion_rate: f64,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub channels: ChannelArgs,
    /// Input delays, e.g. `0:1` or `0 2 4` (default 0:1).
    #[arg(long, value_parser = parse_lags)]
    pub input_delays: Option<LagSet>,
    /// Feedback delays (default 1).
    #[arg(long, value_parser = parse_lags)]
    pub feedback_delays: Option<LagSet>,
    /// Hidden neurons (default 22).
    #[arg(long)]
    pub neurons: Option<usize>,
    /// A sweep's chosen_config.json supplying delays and neurons not given as flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub diag: DiagArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SimulateArgs {
    /// Saved model (model.json).
    #[arg(long)]
    pub model: PathBuf,
    /// OHLCV CSV; rows before --from prime the delay lines.
    #[arg(long)]
    pub csv: PathBuf,
    /// First forecast date (default: the last --horizon rows).
    #[arg(long, value_parser = parse_date)]
    pub from: Option<i64>,
    /// Ignore rows after this date.
    #[arg(long, value_parser = parse_date)]
    pub to: Option<i64>,
    #[arg(long, default_value_t = 100)]
    pub horizon: usize,
    /// Exogenous channels expected by the caller; must match the model.
    #[arg(long, value_delimiter = ',')]
    pub exo_channels: Option<Vec<Channel>>,
    #[command(flatten)]
    pub diag: DiagArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub channels: ChannelArgs,
    /// Candidate input delays, comma separated, e.g. `0:1,2:5`.
    #[arg(long, default_value = "0:1")]
    pub input_delays: String,
    /// Candidate feedback delays, comma separated.
    #[arg(long, default_value = "1")]
    pub feedback_delays: String,
    /// Candidate neuron counts, comma separated.
    #[arg(long, default_value = "22")]
    pub neurons: String,
    /// Grid points trained concurrently (default: available cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub diag: DiagArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub diag: DiagArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn parse_date(s: &str) -> Result<i64, String> {
    narx::data::parse_timestep(s).ok_or_else(|| format!("`{s}` is neither an ISO date nor a day number"))
}

fn parse_lags(s: &str) -> Result<LagSet, String> {
    s.parse::<LagSet>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => commands::train(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Eval(args) => commands::eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
