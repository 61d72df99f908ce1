//! File formats, configuration, grid runs and the `nvbsim` command line on
//! top of `nvbsim-core`.

pub mod config;
pub mod error;
pub mod grid;
pub mod ledger_csv;
pub mod loader;
pub mod output;
pub mod synth;

pub use config::{RunConfig, Workload};
pub use error::{exit_code, ConfigError};
pub use loader::{LoadOptions, LoadedTrace};
