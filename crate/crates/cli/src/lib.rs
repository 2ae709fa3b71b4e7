//! Batch frontend: every subcommand reads one JSON experiment config and
//! writes its artifacts under an output directory.

use std::ffi::OsString;
use std::io;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

mod commands;
pub mod config;
pub mod heatmap;

pub use config::ExperimentConfig;
pub use heatmap::{render_heatmap, write_heatmap, Heatmap};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

pub const ENV_OUT: &str = "IMAPLAB_OUT";
pub const ENV_THREADS: &str = "IMAPLAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: config, paths, data or hyperparameters.
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => EXIT_USER,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<imaplab::Error> for CliError {
    fn from(e: imaplab::Error) -> Self {
        use imaplab::Error as E;
        match &e {
            E::Io(io) if !matches!(io.kind(), io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied) => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        imaplab::Error::Io(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "imaplab", version, about = "Interaction-map recommender experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 forces fully sequential execution.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Load interactions, split leave-one-out and write the partitions.
    PrepareData,
    /// Train one model with fixed hyperparameters and save it.
    Fit,
    /// Leave-one-out evaluation of a saved model.
    Evaluate,
    /// Bayesian hyperparameter search, refit and test evaluation.
    Hpo,
    /// Factor permutation study.
    PermStudy,
    /// Train on the full map, infer with each mask.
    Ablation1,
    /// Train and infer with each mask.
    Ablation2,
    /// Tune and compare every baseline.
    CompareBaselines,
    /// Render matrices or interaction maps as PGM images.
    Heatmap,
}

/// Runs one invocation and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| execute(&cli)));
    match outcome {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("imaplab: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("imaplab: internal error: the command panicked");
            EXIT_INTERNAL
        }
    }
}

fn threads(cli: &Cli) -> Result<Option<usize>, CliError> {
    let n = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var(ENV_THREADS) {
            Ok(s) => Some(
                s.trim()
                    .parse()
                    .map_err(|_| CliError::User(format!("{ENV_THREADS}={s:?} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::User("thread count must be at least 1".into()));
    }
    Ok(n)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed.or(cfg.seed) {
        cfg.apply_seed(seed);
    }
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(ENV_OUT).map(PathBuf::from))
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match threads(cli)? {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            pool.install(|| commands::dispatch(cli.command, &cfg, &out))
        }
        None => commands::dispatch(cli.command, &cfg, &out),
    }
}
