//! Batch front end: `simulate` writes a time-tag file and manifest, `analyze`
//! turns it into CHSH, randommeter and verdict reports, `report` summarizes
//! one or more analyzed runs.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod pipeline;

pub use config::Config;
pub use error::{CliError, CliResult};
pub use pipeline::{analyze_events, Analysis};
