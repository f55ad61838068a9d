use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hyperfusion::{Error, Result};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command invocation, written once at the end of the run.
#[derive(Debug)]
pub struct RunManifest {
    command: String,
    config_hash: String,
    seed: u64,
    started_at: u64,
    metrics: BTreeMap<String, Value>,
    artifacts: Vec<PathBuf>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start(command: &str, config_hash: String, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash,
            seed,
            started_at: unix_now(),
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn metric(&mut self, stage: &str, value: Value) {
        self.metrics.insert(stage.to_string(), value);
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    pub fn to_json(&self, finished_at: u64) -> Value {
        serde_json::json!({
            "command": self.command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.config_hash,
            "seed": self.seed,
            "started_at": self.started_at,
            "finished_at": finished_at,
            "metrics": self.metrics,
            "artifacts": self.artifacts,
        })
    }

    /// Write `manifest.json` into `dir` via a temporary file and rename.
    pub fn finish(self, dir: &Path) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(&self.to_json(unix_now())).expect("manifest serializes") + "\n";
        let path = dir.join(MANIFEST_FILE);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
