//! Exit-code classification.
//!
//! Errors travel as `anyhow::Error`; the exit code is picked from the first
//! recognised error in the chain: 1 for configuration, 2 for I/O and
//! malformed input, 3 for internal invariant violations.

use std::fmt;

use nvbsim_core::SimError;

use crate::ledger_csv::LedgerCsvError;
use crate::loader::MalformedTrace;

/// A configuration problem detected outside the core crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return e.exit_code();
        }
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() || cause.is::<clap::Error>() {
            return 1;
        }
        if cause.is::<std::io::Error>()
            || cause.is::<csv::Error>()
            || cause.is::<MalformedTrace>()
            || cause.is::<LedgerCsvError>()
            || cause.is::<serde_json::Error>()
        {
            return 2;
        }
    }
    1
}
