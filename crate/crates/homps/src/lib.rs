//! Driver for the `homps-core` solvers: run configuration, noise synthesis,
//! ensemble orchestration and result files.

pub mod cli;
pub mod config;
pub mod error;
pub mod noise;
pub mod output;
pub mod runner;

pub use config::RunConfig;
pub use error::{DriverError, Result};
pub use runner::{run, Prepared, RunResult};
