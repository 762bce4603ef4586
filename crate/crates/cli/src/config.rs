//! Settings shared by several subcommands. A value given on the command line
//! wins over the config file, which wins over the built-in default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Flat TOML document; every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_root: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub format: Option<String>,
    pub segmenter: Option<String>,
    pub encoder: Option<String>,
    pub seed: Option<u64>,
    pub sample_seed: Option<u64>,
    pub k: Option<usize>,
    pub ks: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub workers: Option<usize>,
    pub split: Option<String>,
    pub conditioned: Option<bool>,
    pub input_mode: Option<String>,
    pub mode: Option<String>,
    pub identifier: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let err = |message: String| CliError::Config { path: path.to_path_buf(), message };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        toml::from_str(&text).map_err(|e| err(e.message().to_string()))
    }
}

/// Command-line value, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Resolves relative input paths against the data root, when one is set.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub data_root: Option<PathBuf>,
}

impl Inputs {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.data_root {
            Some(root) if path.is_relative() => root.join(path),
            _ => path.to_path_buf(),
        }
    }
}
