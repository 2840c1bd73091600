//! Run manifests written beside every output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::io::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub seed: u64,
    /// Every file the run wrote, manifest excluded.
    pub artifacts: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_owned(),
            parameters: BTreeMap::new(),
            seed,
            artifacts: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.insert(key.to_owned(), value.to_string());
        self
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    /// Writes `<stem>.manifest.json` next to `primary` and returns its path.
    pub fn write_beside(&self, primary: &Path) -> Result<PathBuf> {
        let path = manifest_path(primary);
        write_json(&path, self)?;
        Ok(path)
    }
}

/// `dir/rho.json` → `dir/rho.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let stem = primary
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    primary.with_file_name(format!("{stem}.manifest.json"))
}
