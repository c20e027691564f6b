//! Command-line pipeline: reference and baseline runs, training data,
//! training, DNN-MG runs, evaluation and timing.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod manifest;

pub use commands::{run, Cli, Command};
pub use config::Config;
