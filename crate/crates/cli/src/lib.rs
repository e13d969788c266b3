//! Config-driven experiment runner: dataset generation, training under any
//! method, evaluation and π-sweeps.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    build_splits, cmd_evaluate, cmd_generate, cmd_sweep, cmd_train, default_scorer, load_splits, train_method,
    EvaluateArgs, Splits, SweepRow, TrainOutcome, TrainSummary,
};
pub use config::{ExperimentConfig, Method, OUTPUT_DIR_ENV};
pub use error::CliError;
