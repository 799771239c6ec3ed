//! Config-file loading and flag/file merging. A flag always wins over the
//! config-file value for the same key; built-in defaults apply last.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] bds_core::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = Result<T, CliError>;

/// Accepts either a single value or an array in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

/// Optional keys a JSON config file may provide. Unknown keys are rejected
/// so typos surface instead of silently falling back to defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub annotations: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub rho: Option<OneOrMany<f64>>,
    pub tau: Option<OneOrMany<f64>>,
    pub classes: Option<Vec<String>>,
    pub consensus_k: Option<usize>,
    pub strategy: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub split: Option<f64>,
    pub c: Option<f64>,
    pub mode: Option<String>,
    pub macro_averaging: Option<bool>,
    pub brute_force_full_dataset: Option<bool>,
    pub spec: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn load_file_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
}

pub fn require_path(
    flag: Option<&PathBuf>,
    file: Option<&PathBuf>,
    key: &str,
) -> CliResult<PathBuf> {
    flag.or(file)
        .cloned()
        .ok_or_else(|| CliError::Config(format!("missing required input: --{key} (or `{key}` in the config file)")))
}

pub fn parse_mode(name: &str) -> CliResult<bds_core::bandit::ScoringMode> {
    match name.to_lowercase().as_str() {
        "mean" => Ok(bds_core::bandit::ScoringMode::Mean),
        "cumulative" => Ok(bds_core::bandit::ScoringMode::Cumulative),
        other => Err(CliError::Config(format!(
            "unknown scoring mode `{other}` (expected mean|cumulative)"
        ))),
    }
}
