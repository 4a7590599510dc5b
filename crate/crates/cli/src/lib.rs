//! Library side of the `lagkv` command-line tool.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_compress, cmd_ratio, cmd_scores, cmd_sweep};
pub use config::RunConfig;
pub use error::CliError;
