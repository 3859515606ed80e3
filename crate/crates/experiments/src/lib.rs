//! Experiment orchestration for `ar-surrogate`: dataset generation,
//! training sweeps over schemes and weighting strategies, rollout
//! evaluation, and SVG/CSV reporting.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod generate;
pub mod layout;
pub mod report;
pub mod seeds;
pub mod sweep;
pub mod train;

pub use config::ExperimentConfig;
pub use error::{ExpError, Result};

use std::path::Path;

use error::IoContext;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ExpError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    ar_surrogate::write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|source| ExpError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).at(path)
}
