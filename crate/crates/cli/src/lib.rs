//! Layer files, reports and the command-line driver around
//! [`sparse_accel_core`].

pub mod atomic;
pub mod config;
pub mod error;
pub mod layer_file;
pub mod report;
pub mod runner;

pub use error::CliError;
pub use layer_file::{LayerFile, LayerFileError, TileHint};
pub use report::{ReportRow, RunReport, Verdict};
pub use runner::RunConfig;
