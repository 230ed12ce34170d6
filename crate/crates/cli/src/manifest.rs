use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::CliError;

/// Provenance record of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_digest: String,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub counts: BTreeMap<String, u64>,
    /// Wall-clock milliseconds; the only run-to-run varying field.
    pub timing: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, settings: &Settings, seed: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_digest: settings.digest(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
            timing: BTreeMap::new(),
        }
    }

    /// Writes to a sibling temporary file and renames it into place, so a
    /// reader never sees a partial manifest.
    pub fn write_atomic(&self, path: &Path) -> Result<(), CliError> {
        let fail = |e: &dyn std::fmt::Display| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(|e| fail(&e))?;
        let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        tmp_name.push(".tmp");
        let tmp = dir.join(tmp_name);
        let text = serde_json::to_string_pretty(self).map_err(|e| fail(&e))?;
        let mut f = std::fs::File::create(&tmp).map_err(|e| fail(&e))?;
        f.write_all(text.as_bytes()).and_then(|_| f.write_all(b"\n")).and_then(|_| f.sync_all()).map_err(|e| fail(&e))?;
        std::fs::rename(&tmp, path).map_err(|e| fail(&e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}
