//! Command-line entry point: wires configs to dataset generation, training,
//! evaluation, and analysis. Exit codes: 0 success, 2 usage, 3 invalid
//! config, 4 missing input, 5 failed check, 1 other runtime error.

mod commands;
mod config;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, GlobalFlags};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID_CONFIG: u8 = 3;
pub const EXIT_MISSING_INPUT: u8 = 4;
pub const EXIT_CHECK_FAILED: u8 = 5;
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Parser)]
#[command(name = "voxelprior", version, about = "Single-image voxel reconstruction with shape priors")]
struct Cli {
    /// TOML config file; flags override file values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for the command
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output (run) directory; defaults to $VOXELPRIOR_OUT/<command>
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores); results do not depend on the count
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Architecture/dataset scale preset
    #[arg(long, global = true, value_parser = ["desk", "paper"])]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the procedural voxel dataset with renders and a manifest
    GenData {
        /// Instances per category
        #[arg(long)]
        instances: Option<usize>,
        /// Rendered views per instance
        #[arg(long)]
        views: Option<usize>,
    },
    /// Train a model on the base categories of a generated dataset
    Train {
        /// Dataset directory (a gen-data run dir or the dataset root)
        #[arg(long)]
        data: PathBuf,
        /// Model variant: prior | image-only
        #[arg(long)]
        variant: Option<String>,
        /// Refinement iterations per batch
        #[arg(long)]
        iters: Option<usize>,
        /// Training prior mode: kshot | full
        #[arg(long)]
        prior: Option<String>,
        /// k for kshot training priors
        #[arg(long)]
        k: Option<usize>,
        /// Maximum training epochs
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Few-shot transfer grid over novel categories
    EvalFewshot {
        #[arg(long)]
        data: PathBuf,
        /// Trained run directory; repeat for multiple models
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// k values; repeat for multiple (full prior is always included)
        #[arg(long)]
        k: Vec<usize>,
        /// Test views per instance
        #[arg(long)]
        views: Option<usize>,
    },
    /// IoU as a function of the number of input views
    EvalMultiview {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Maximum number of views
        #[arg(long)]
        views: Option<usize>,
        /// Category role to evaluate: base | novel
        #[arg(long)]
        role: Option<String>,
    },
    /// Prior ablations plus the 1-shot variability measurement
    EvalAblations {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Distribution analytics over evaluation report CSVs
    Analyze {
        /// Report CSV produced by an eval command; repeat for several
        #[arg(long = "report", required = true)]
        reports: Vec<PathBuf>,
        /// Condition to slice on when a report holds more than one
        #[arg(long)]
        condition: Option<String>,
    },
    /// Finite-difference gradient check on the tiny configuration
    Gradcheck {
        /// Maximum allowed relative error
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::Train { .. } => "train",
            Command::EvalFewshot { .. } => "eval-fewshot",
            Command::EvalMultiview { .. } => "eval-multiview",
            Command::EvalAblations { .. } => "eval-ablations",
            Command::Analyze { .. } => "analyze",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }
}

/// CLI-level failure with its process exit code.
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(m) => Failure::new(EXIT_INVALID_CONFIG, "invalid-config", m),
            ConfigError::Missing(m) => Failure::new(EXIT_MISSING_INPUT, "missing-input", m),
        }
    }
}

impl From<voxelprior::Error> for Failure {
    fn from(e: voxelprior::Error) -> Self {
        use voxelprior::Error::*;
        let (code, kind) = match &e {
            InvalidConfig(_) | InvalidArgument { .. } => (EXIT_INVALID_CONFIG, "invalid-config"),
            MissingInput(_) | Io { .. } | Format { .. } | UnknownCategory(_) => {
                (EXIT_MISSING_INPUT, "missing-input")
            }
            _ => (EXIT_RUNTIME, "runtime"),
        };
        Failure::new(code, kind, e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let flags = GlobalFlags {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        threads: cli.threads,
        preset: cli.preset,
    };
    let resolved = config::resolve(cli.command.name(), &flags)?;
    if resolved.threads > 0 {
        // ignore "already initialized" from repeated calls in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(resolved.threads)
            .build_global();
    }

    let run_dir = rundir::RunDir::create(&resolved)?;
    let files = match &cli.command {
        Command::GenData { instances, views } => {
            commands::gen_data::run(&resolved, &run_dir, *instances, *views)?
        }
        Command::Train {
            data,
            variant,
            iters,
            prior,
            k,
            epochs,
        } => commands::train::run(
            &resolved,
            &run_dir,
            data,
            variant.as_deref(),
            *iters,
            prior.as_deref(),
            *k,
            *epochs,
        )?,
        Command::EvalFewshot {
            data,
            models,
            k,
            views,
        } => commands::eval::fewshot(&resolved, &run_dir, data, models, k, *views)?,
        Command::EvalMultiview {
            data,
            model,
            views,
            role,
        } => commands::eval::multiview(&resolved, &run_dir, data, model, *views, role.as_deref())?,
        Command::EvalAblations { data, model } => {
            commands::eval::ablations(&resolved, &run_dir, data, model)?
        }
        Command::Analyze { reports, condition } => {
            commands::analyze::run(&run_dir, reports, condition.as_deref())?
        }
        Command::Gradcheck { tol } => commands::gradcheck::run(&run_dir, *tol)?,
    };

    run_dir.write_files_manifest(&files)?;
    println!("run dir: {}", run_dir.path().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("error: kind={} msg=\"{}\"", f.kind, f.message.replace('"', "'"));
            ExitCode::from(f.code)
        }
    }
}
