//! File formats, built-in benchmarks, run orchestration and reports on top
//! of [`ddbounds_core`].

use std::path::PathBuf;

pub mod benchmarks;
pub mod driver;
pub mod expr;
pub mod formats;
pub mod report;

pub use ddbounds_core as core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] ddbounds_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("expression: {0}")]
    Parse(String),
    #[error("configuration: {0}")]
    Config(String),
}
