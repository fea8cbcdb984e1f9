//! Run directories, file formats and the `coca` command line.

pub mod ablate;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod report;
pub mod run;
pub mod train;

pub use config::RunConfig;
pub use error::{LabError, Result};
