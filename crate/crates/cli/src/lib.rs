//! Command-line pipeline: simulate, tune, build a dataset, train the network
//! and evaluate it in closed loop.
//!
//! Exit codes: 0 success, 1 i/o failure, 2 configuration, 3 divergence,
//! 4 data, 5 model/config incompatibility.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::Context;
pub use config::RunConfig;
pub use error::{CliError, CliResult};
