//! Per-artifact-directory run record.

use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use segland_core::io::{read_json, write_json};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_paths: Vec<PathBuf>,
    pub config_digest: Option<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    /// Starts a record for `command`, stamping the start time.
    pub fn begin(command: &str) -> Self {
        let now = timestamp();
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_paths: Vec::new(),
            config_digest: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            started_at: now.clone(),
            finished_at: now,
        }
    }

    /// Stamps the finish time and writes `<dir>/manifest.json`.
    pub fn finish(mut self, dir: &Path) -> Result<Self> {
        self.finished_at = timestamp();
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_json(dir.join(MANIFEST_FILE), &self)?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(CliError::MissingArtifact(path));
        }
        Ok(read_json(path)?)
    }
}

fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}
