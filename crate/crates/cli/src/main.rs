//! `cpf`: ingest logs, build prerequisite graphs, train and evaluate models,
//! and run the verification commands.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpf_core::model::Ablation;
use cpf_core::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "cpf", version, about = "Knowledge tracing with personalized learning and causal forgetting")]
struct Cli {
    #[command(flatten)]
    flags: Flags,

    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; they override values from `--config`.
#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Input file or dataset directory.
    #[arg(long = "in", global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long = "out", global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["full", "P", "I", "L", "FP"])]
    pub ablation: Option<String>,
    #[arg(long, global = true, value_parser = ["cpf", "lpkt"])]
    pub mode: Option<String>,
    /// Review window size.
    #[arg(long = "k-window", global = true)]
    pub k_window: Option<usize>,
    #[arg(long, global = true)]
    pub fold: Option<usize>,
    /// Model checkpoint to read.
    #[arg(long, global = true, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse an interaction CSV into a windowed dataset directory.
    Ingest,
    /// Derive the concept prerequisite graph from a log or dataset.
    BuildGraph,
    /// Train on one fold and write a checkpoint, training log and metrics.
    Train,
    /// Evaluate a checkpoint on its fold's test students.
    Eval,
    /// k-fold cross-validation, optionally over several review windows.
    CrossValidate {
        /// Number of folds (overrides the config).
        #[arg(long)]
        folds: Option<usize>,
        /// Review window sizes to compare, e.g. `0,10,30,50,100`.
        #[arg(long = "k-grid", value_delimiter = ',', num_args = 1..)]
        k_grid: Option<Vec<usize>>,
    },
    /// Compare analytic and finite-difference gradients of the full loss.
    Gradcheck,
    /// Generate a synthetic log with a planted prerequisite graph.
    Simulate {
        #[arg(long)]
        students: Option<usize>,
        /// Attempts per student.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Write per-step model diagnostics for every sequence.
    ExportStates,
}

/// Loads `--config` (or defaults) and applies flag overrides.
fn resolve(flags: &Flags) -> anyhow::Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(a) = &flags.ablation {
        cfg.model.ablation = a.parse::<Ablation>()?;
    }
    if let Some(m) = &flags.mode {
        cfg.model.mode = m.clone();
    }
    if let Some(k) = flags.k_window {
        cfg.model.review_window = k;
    }
    if let Some(f) = flags.fold {
        cfg.fold = f;
    }
    if let Some(e) = flags.epochs {
        cfg.train.epochs = e;
    }
    cfg.world.seed = cfg.seed;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = resolve(&cli.flags)?;
    let f = &cli.flags;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg, f),
        Command::BuildGraph => commands::build_graph(&cfg, f),
        Command::Train => commands::train(&cfg, f),
        Command::Eval => commands::eval(&cfg, f),
        Command::CrossValidate { folds, k_grid } => {
            if let Some(k) = folds {
                cfg.folds = k;
            }
            commands::cross_validate(&cfg, f, k_grid)
        }
        Command::Gradcheck => commands::gradcheck(&cfg, f),
        Command::Simulate { students, steps } => {
            if let Some(n) = students {
                cfg.world.n_students = n;
            }
            if let Some(n) = steps {
                cfg.steps_per_student = n;
            }
            commands::simulate(&cfg, f)
        }
        Command::ExportStates => commands::export_states(&cfg, f),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
