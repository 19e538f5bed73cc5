//! Library side of the `norank` command-line tool: run configuration, the
//! benchmark grid and report writers. The binary is a thin wrapper around
//! [`commands::run`].

pub mod benchmark;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use benchmark::{compute_benchmark, run_benchmark, BenchmarkOutcome, MethodOutcome};
pub use config::{DatasetSpec, Method, ReportFormat, RunConfig};
pub use error::{CliError, CliResult};
