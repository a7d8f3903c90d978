//! Top-level error and process exit codes.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O, trace or other runtime failure |
//! | 2 | usage or configuration error |
//! | 3 | real-time violation |
//! | 4 | invariant breach |

use std::io;
use std::path::PathBuf;

use rtcsim_core::mac::MacError;

use crate::config::ConfigError;
use crate::realtime::RealtimeError;
use crate::trace_io::TraceError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REALTIME: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Mac(MacError),
    #[error(transparent)]
    Realtime(RealtimeError),
    #[error("invariant breach: {0}")]
    Invariant(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Realtime(RealtimeError::Violation { .. }) => EXIT_REALTIME,
            CliError::Mac(MacError::Invariant(_) | MacError::OrderingViolation { .. })
            | CliError::Invariant(_) => EXIT_INVARIANT,
            _ => EXIT_FAILURE,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<MacError> for CliError {
    fn from(e: MacError) -> Self {
        CliError::Mac(e)
    }
}

impl From<RealtimeError> for CliError {
    fn from(e: RealtimeError) -> Self {
        match e {
            RealtimeError::Mac(m) => CliError::Mac(m),
            other => CliError::Realtime(other),
        }
    }
}
