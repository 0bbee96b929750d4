//! Experiment runner behind the `cbilab` binary: scenario documents, the
//! built-in catalog, execution and report files.

pub mod catalog;
pub mod config;
pub mod report;
pub mod run;

use std::path::Path;

use thiserror::Error;

pub use config::{Experiment, Overrides, Scenario, SimSection};
pub use run::{run, Report, Row, Status};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] cbilab::Error),
    #[error("refused: {0}")]
    Refused(String),
    #[error("unknown scenario `{0}`; see `cbilab list`")]
    UnknownScenario(String),
}

/// A scenario from a file path or, failing that, from the catalog.
pub fn resolve(source: &str) -> Result<Scenario, CliError> {
    let path = Path::new(source);
    if path.exists() {
        return Scenario::load(path);
    }
    if source.ends_with(".toml") {
        return Err(CliError::Io(format!("{source}: no such file")));
    }
    catalog::find(source).ok_or_else(|| CliError::UnknownScenario(source.into()))
}
