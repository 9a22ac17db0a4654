mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, EXIT_USAGE};

/// Thread-count variable; results do not depend on it.
pub const THREADS_ENV: &str = "GQNQ_THREADS";

#[derive(Parser, Debug)]
#[command(name = "gqnq", version, about = "Generative query networks for quantum measurement statistics")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory (default: runs/<command>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Shots per context measurement (0 for exact statistics).
    #[arg(long, global = true)]
    shots: Option<usize>,
    #[arg(long, global = true)]
    noise_sigma: Option<f64>,
    #[arg(long, global = true)]
    phase_jitter_sigma: Option<f64>,
    /// Context size s, for training and evaluation.
    #[arg(long, global = true)]
    context_size: Option<usize>,
    /// Number of Pauli settings or homodyne phases kept.
    #[arg(long, global = true)]
    measurement_subset_size: Option<usize>,
    /// Multiplies the default dataset sizes.
    #[arg(long, global = true)]
    scale_factor: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct Selection {
    /// Keep only states of these families.
    #[arg(long = "family")]
    pub families: Vec<String>,
    /// Keep at most this many states (after the family filter).
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train and test dataset files.
    GenData {
        /// Also write a JSON-lines export of each file.
        #[arg(long)]
        jsonl: bool,
    },
    /// Train on many states.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Continue from this checkpoint up to the configured epoch count.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train on the records of one state and score held-out predictions.
    TrainSingle {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        state: usize,
    },
    /// Predict distributions for query parametrizations from a context.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON lines of {"m": [...], "p": [...]}.
        #[arg(long)]
        context: PathBuf,
        /// JSON lines of {"m": [...]}.
        #[arg(long)]
        queries: PathBuf,
    },
    /// Reveal measurements one at a time and track the fidelity.
    Online {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        select: Selection,
    },
    /// Fidelity report on a test set.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        select: Selection,
    },
    /// Embed and cluster representations; score clusters against families.
    Cluster {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        select: Selection,
    },
    /// Train a pure/mixed ferromagnetic regime classifier on representations.
    Classify {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        train_data: PathBuf,
        #[arg(long)]
        test_data: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::Train { .. } => "train",
            Command::TrainSingle { .. } => "train-single",
            Command::Predict { .. } => "predict",
            Command::Online { .. } => "online",
            Command::Eval { .. } => "eval",
            Command::Cluster { .. } => "cluster",
            Command::Classify { .. } => "classify",
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    gqnq::parallel::set_threads(n);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let g = &cli.global;
    let base = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seed: g.seed,
        shots: g.shots,
        noise_sigma: g.noise_sigma,
        phase_jitter_sigma: g.phase_jitter_sigma,
        context_size: g.context_size,
        measurement_subset_size: g.measurement_subset_size,
        scale_factor: g.scale_factor,
    };
    let config = base.resolve(&overrides)?;
    let out = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs").join(cli.command.name()));
    let run = commands::RunDir::create(&out, cli.command.name(), &config)?;
    match cli.command {
        Command::GenData { jsonl } => commands::gen_data(&run, &config, jsonl),
        Command::Train { data, resume } => commands::train(&run, &config, &data, resume.as_deref()),
        Command::TrainSingle { data, state } => commands::train_single(&run, &config, &data, state),
        Command::Predict { checkpoint, context, queries } => commands::predict(&run, &checkpoint, &context, &queries),
        Command::Online { checkpoint, data, steps, select } => {
            commands::online(&run, &config, &checkpoint, &data, steps, &select)
        }
        Command::Eval { checkpoint, data, select } => commands::eval(&run, &config, &checkpoint, &data, &select),
        Command::Cluster { checkpoint, data, k, select } => {
            commands::cluster(&run, &config, &checkpoint, &data, k, &select)
        }
        Command::Classify { checkpoint, train_data, test_data } => {
            commands::classify(&run, &config, &checkpoint, &train_data, &test_data)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
