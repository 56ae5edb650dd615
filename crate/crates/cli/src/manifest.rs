//! Run manifests: what a command read, how it was configured and what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::write_json;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Absolute paths of the files read.
    pub inputs: Vec<String>,
    /// Fully resolved options; enough to re-run the command.
    pub options: serde_json::Value,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Files written, relative to the output location.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new<T: Serialize>(
        command: &str,
        inputs: Vec<String>,
        options: &T,
        seed: Option<u64>,
        outputs: Vec<String>,
    ) -> Result<Self, CliError> {
        Ok(Self {
            command: command.into(),
            tool_version: TOOL_VERSION.into(),
            inputs,
            options: serde_json::to_value(options).map_err(|e| CliError::Data(format!("cannot record options: {e}")))?,
            seed,
            outputs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: not a run manifest: {e}", path.display())))
    }

    pub fn options_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T, CliError> {
        serde_json::from_value(self.options.clone()).map_err(|e| CliError::Data(format!("manifest options for {}: {e}", self.command)))
    }
}

/// Absolute form of an input path, so a manifest can be replayed from anywhere.
pub fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    fs::canonicalize(path).map_err(|e| CliError::io(path, e))
}
