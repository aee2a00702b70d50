//! Command-line surface of the `yn-crowd` tool.
//!
//! Campaign directories hold the canonical delimited files (`classes.csv`,
//! `votes.csv`, `known_labels.csv`, ...). Inference settings come from an
//! optional flat `key = value` config file; `--seed` overrides every seed.
//! Exit codes: 0 on success, 2 on usage or validation errors, 1 on runtime
//! failures.

pub mod commands;
pub mod error;
pub mod settings;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};
pub use settings::Settings;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "YN_CROWD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "yn-crowd", version, about = "Bayesian aggregation of yes/no crowd votes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for simulation and inference.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat `key = value` settings file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Gibbs,
    Bbvi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    /// Conjugate credibility stage on known objects, then the labeling stage.
    Two,
    /// One run with known labels observed.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Experiment {
    /// Accuracy and credibility MSE against the number of known objects.
    KnownSweep,
    /// YN model against majority, individual labelers and the confusion-matrix model.
    Baselines,
    /// Accuracy against answers per object for both question types, plus cost rows.
    Curves,
    /// PSRF and accuracy stability of long runs.
    Convergence,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic campaign (votes, truth and true credibilities).
    Simulate,
    /// Fit the model to a campaign and write predictions and credibility posteriors.
    Fit {
        /// Campaign directory with classes.csv, votes.csv and known_labels.csv.
        #[arg(long, value_name = "DIR")]
        campaign: PathBuf,
        #[arg(long, value_enum, default_value = "gibbs")]
        backend: Backend,
        #[arg(long, value_enum, default_value = "two")]
        stage: Stage,
        /// Also write every retained Gibbs draw to samples.jsonl.
        #[arg(long)]
        keep_samples: bool,
    },
    /// Label a campaign's objects using an existing credibility posterior.
    Predict {
        #[arg(long, value_name = "DIR")]
        campaign: PathBuf,
        /// Credibility posterior used as the cell priors.
        #[arg(long, value_name = "PATH")]
        credibility: PathBuf,
        #[arg(long, value_enum, default_value = "gibbs")]
        backend: Backend,
    },
    /// Score predictions, or run benchmark experiments and write their tables.
    Evaluate(EvaluateArgs),
    /// Fit with Gibbs and write the PSRF report.
    Diagnose {
        #[arg(long, value_name = "DIR")]
        campaign: PathBuf,
        #[arg(long, value_enum, default_value = "two")]
        stage: Stage,
    },
    /// Compare accuracy curves at equal question cost.
    CostAnalysis {
        /// Curve table with columns strategy,questions,accuracy.
        #[arg(long, value_name = "PATH")]
        curves: PathBuf,
        /// Equivalence factors (yes/no answers per full answer).
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        factors: Vec<f64>,
        /// Measured seconds per yes/no answer.
        #[arg(long, requires = "abcd_seconds")]
        yn_seconds: Option<f64>,
        /// Measured seconds per full answer.
        #[arg(long, requires = "yn_seconds")]
        abcd_seconds: Option<f64>,
    },
    /// Run the labeling service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory of campaign event logs.
        #[arg(long, value_name = "DIR")]
        data_dir: PathBuf,
        /// Labeling UI bundle served at the root.
        #[arg(long, value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
    /// Write a service campaign's canonical files.
    Export {
        #[arg(long, value_name = "DIR")]
        data_dir: PathBuf,
        #[arg(long)]
        campaign: String,
    },
    /// Convert a wide legacy vote file into votes.csv.
    ImportLegacy {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        classes: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions to score.
    #[arg(long, value_name = "PATH", requires_all = ["truth", "classes"], conflicts_with = "experiments")]
    pub predictions: Option<PathBuf>,
    /// True labels.
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub classes: Option<PathBuf>,
    /// Estimated credibility posterior, compared with `--true-theta`.
    #[arg(long, value_name = "PATH", requires = "true_theta")]
    pub credibility: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "credibility")]
    pub true_theta: Option<PathBuf>,
    /// Benchmark experiments to run.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub experiments: Vec<Experiment>,
}

/// Parses and runs one invocation; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let threads = thread_cap()?;
    let settings = Settings::load(cli.global.config.as_deref(), cli.global.seed)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| commands::dispatch(&cli.command, &settings, &cli.global.out, threads))
}

fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}
