//! Host side of the `rtcsim` emulator: configuration, trace files, batch and
//! wall-clock paced runs, UDP emission and report files. The simulation itself
//! lives in [`rtcsim_core`].

pub mod config;
pub mod error;
pub mod output;
pub mod realtime;
pub mod runner;
pub mod trace_io;
pub mod udp;

pub use config::RunConfig;
pub use error::CliError;
