mod commands;
mod oracle;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    AudioArgs, CpdArgs, NmfArgs, SalientArgs, SelectKArgs, TtArgs, TuckerArgs, VideoArgs,
};
use oracle::OracleCommand;

#[derive(Parser)]
#[command(name = "latentfire", version, about = "Non-negative matrix/tensor factorization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize a non-negative matrix with multiplicative updates.
    Nmf(NmfArgs),
    /// Estimate the latent dimension of a matrix by NMFk.
    SelectK(SelectKArgs),
    /// Non-negative CP decomposition of a 3- or 4-way tensor.
    Cpd(CpdArgs),
    /// Non-negative Tucker decomposition, with optional per-mode rank selection.
    Tucker(TuckerArgs),
    /// Non-negative tensor-train decomposition.
    Tt(TtArgs),
    /// Salient timesteps of a spatiotemporal tensor.
    Salient(SalientArgs),
    /// Source separation and event detection on a WAV file.
    AudioAnomaly(AudioArgs),
    /// Tucker + CPD anomaly detection on a video tensor.
    VideoAnomaly(VideoArgs),
    /// Brute-force reference computations.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

pub enum CliError {
    Usage(String),
    Run(latentfire::Error),
}

impl From<latentfire::Error> for CliError {
    fn from(e: latentfire::Error) -> Self {
        CliError::Run(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Sizes the global worker pool from `LATENTFIRE_THREADS` (unset or 0 = all cores).
fn configure_threads() -> CliResult<()> {
    let threads = match std::env::var("LATENTFIRE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("LATENTFIRE_THREADS must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size worker pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Nmf(a) => commands::nmf(a),
        Command::SelectK(a) => commands::select_k(a),
        Command::Cpd(a) => commands::cpd(a),
        Command::Tucker(a) => commands::tucker(a),
        Command::Tt(a) => commands::tt(a),
        Command::Salient(a) => commands::salient(a),
        Command::AudioAnomaly(a) => commands::audio_anomaly(a),
        Command::VideoAnomaly(a) => commands::video_anomaly(a),
        Command::Oracle(o) => oracle::run(o),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
