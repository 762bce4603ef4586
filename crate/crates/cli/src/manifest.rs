//! Run manifests: enough to rerun a command and get the same bytes back.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use evinf_core::jsonl::write_json;
use evinf_core::pipeline::config_hash;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub const VERSION: &str = env!("EVINF_VERSION");

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub encoder_identity: Option<String>,
    pub config: serde_json::Value,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>, encoder_identity: Option<&str>) -> Self {
        Self {
            command: command.to_string(),
            version: VERSION.to_string(),
            config_hash: config_hash(config),
            seed,
            encoder_identity: encoder_identity.map(str::to_string),
            config: serde_json::to_value(config).expect("configuration serializes"),
            outputs: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path).map_err(|e| evinf_core::Error::Io { path: path.to_path_buf(), source: e })?;
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.outputs.insert(name, hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    /// `manifest.json` inside an output directory.
    pub fn write_in(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }

    /// `<file>.manifest.json` beside a single output file.
    pub fn write_beside(&self, file: &Path) -> CliResult<PathBuf> {
        let mut name = file.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = file.with_file_name(name);
        write_json(&path, self)?;
        Ok(path)
    }
}
