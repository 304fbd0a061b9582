//! Command-line front end: configuration, artifact writing and the
//! acceptance suite.

pub mod args;
pub mod config;
pub mod output;
pub mod run;
pub mod suite;

pub use config::RunConfig;
pub use run::{execute, run, RunError};
