//! `tslearn` — batch-style frontend for teacher-student feature-transfer
//! experiments. Exit codes are a stable scripting contract: 0 success,
//! 1 runtime failure, 2 config error, 3 incompatible teacher/student pair.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tslearn_core::Error as CoreError;

#[derive(Parser)]
#[command(name = "tslearn", version, about = "Teacher-student feature-transfer training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a teacher network with cross-entropy and checkpoint it.
    TrainTeacher {
        /// Experiment config file (mode = teacher).
        #[arg(long)]
        config: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Output metrics CSV path.
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Train a student network, optionally against a frozen teacher.
    TrainStudent {
        /// Experiment config file (a student mode).
        #[arg(long)]
        config: PathBuf,
        /// Teacher checkpoint (required in teacher-assisted modes).
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Output metrics CSV path.
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Evaluate a checkpoint on the test split of a dataset and print
    /// `accuracy=<value>`.
    Eval {
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Config file whose [data] section describes the dataset.
        #[arg(long)]
        data: PathBuf,
    },
    /// Generate a dataset in the binary record layout.
    GenData {
        /// Dataset family (only `synthetic`).
        #[arg(long)]
        kind: String,
        /// Number of classes.
        #[arg(long)]
        classes: usize,
        /// Images per class.
        #[arg(long = "per-class")]
        per_class: usize,
        /// Generator seed.
        #[arg(long)]
        seed: u64,
        /// Image shape as CxHxW.
        #[arg(long, default_value = "3x32x32")]
        shape: String,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a checkpoint's spec, parameter count, and frozen flag.
    Inspect {
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
    },
}

/// Error with its process exit code.
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn config(message: String) -> Self {
        CliError { code: 2, message }
    }

    pub fn runtime(message: String) -> Self {
        CliError { code: 1, message }
    }

    pub fn config_from(error: CoreError) -> Self {
        Self::config(error.to_string())
    }

    pub fn runtime_from(error: CoreError) -> Self {
        Self::runtime(error.to_string())
    }

    /// Maps a core error by kind: compatibility violations get their own
    /// exit code so scripts can distinguish them.
    pub fn from_core(error: CoreError) -> Self {
        match error {
            CoreError::Incompatible(report) => CliError {
                code: 3,
                message: format!("incompatible teacher/student pair: {report}"),
            },
            other => Self::runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TrainTeacher { config, out, metrics } => {
            commands::train_teacher_cmd(config, out, metrics)
        }
        Command::TrainStudent { config, teacher, out, metrics } => {
            commands::train_student_cmd(config, teacher.as_deref(), out, metrics)
        }
        Command::Eval { model, data } => commands::eval_cmd(model, data),
        Command::GenData { kind, classes, per_class, seed, shape, out } => {
            commands::gen_data_cmd(kind, *classes, *per_class, *seed, shape, out)
        }
        Command::Inspect { model } => commands::inspect_cmd(model),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
