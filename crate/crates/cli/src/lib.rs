//! Configuration, persistence and subcommands behind the `sphereflow` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod snapshot;

pub use commands::{cmd_run, cmd_spectrum, cmd_stationary, cmd_sweep, cmd_verify, sweep_points, RunSummary, SweepPoint};
pub use config::{parse_config, parse_config_str, InitialCondition, RunSpec, SPECTRUM_CAP_ENV};
pub use error::{CliError, Result};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotError, SnapshotMeta};
