//! The `cld` command-line driver.
//!
//! Every subcommand reads a flat `section.key = value` config (see
//! [`cld_core::config::RunConfig`]), applies `--set` overrides, and writes its
//! outputs atomically under `--out`.

mod commands;
mod io;
mod sweep;

use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use cld_core::config::RunConfig;
use cld_core::Error;

pub use io::{read_manifest, ManifestRow};

#[derive(Debug, Parser)]
#[command(name = "cld", version, about = "Train, sample and evaluate critically-damped Langevin diffusion models")]
pub struct Cli {
    /// Config file; keys not listed keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the training and sampler seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: `run.out_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Extra `key=value` assignments applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the train and test sets.
    Dataset,
    /// Train one score network.
    Train {
        /// Training set written by `dataset`; generated from the config if absent.
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
    },
    /// Draw samples from a trained network or the exact score.
    Sample {
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
    },
    /// Sliced W2 between a sample file and the test set.
    Eval {
        #[arg(long, value_name = "FILE")]
        samples: PathBuf,
        /// Test set written by `dataset`; generated from the config if absent.
        #[arg(long, value_name = "FILE")]
        test: Option<PathBuf>,
    },
    /// ε sweep in the controlled setting `a = 1 − ε²/2`, `σ = √(4 + ε²)`.
    Controlled,
    /// Full (ε, a) sweep with repetitions; resumes from the manifest.
    Experiment,
    /// Theory constants and covariance-bound checks over the sweep grid.
    Theory,
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const NUMERIC: i32 = 2;
    pub const VERIFY: i32 = 3;
}

/// A verification failure reported after all outputs were written.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return exit::VERIFY;
    }
    match err.downcast_ref::<Error>() {
        Some(
            Error::SingularMatrix { .. }
            | Error::NonFiniteLoss { .. }
            | Error::NonFiniteState { .. },
        ) => exit::NUMERIC,
        _ => exit::USAGE,
    }
}

/// Loads the config file (or defaults), applies overrides and `--seed`.
pub fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.train_seed = seed;
        cfg.sampler_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        // only the first call in a process can size the global pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(Error::from)?;
    match &cli.command {
        Command::Dataset => commands::dataset(&cfg),
        Command::Train { data } => commands::train(&cfg, data.as_deref()),
        Command::Sample { checkpoint } => commands::sample(&cfg, checkpoint.as_deref()),
        Command::Eval { samples, test } => commands::eval(&cfg, samples, test.as_deref()),
        Command::Controlled => sweep::controlled(&cfg),
        Command::Experiment => sweep::experiment(&cfg),
        Command::Theory => commands::theory(&cfg),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
