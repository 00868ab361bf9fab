use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one command invocation, written on success and on failure.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub status: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Effective flat configuration; keys sort in a fixed order.
    pub config: BTreeMap<String, String>,
    /// Command-specific settings and summaries (κ, bandwidth, ...).
    pub parameters: BTreeMap<String, Value>,
    pub artifacts: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub versions: BTreeMap<&'static str, &'static str>,
}

pub struct ManifestBuilder {
    start: Instant,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub parameters: BTreeMap<String, Value>,
    pub artifacts: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            start: Instant::now(),
            command: command.to_string(),
            seed,
            config: BTreeMap::new(),
            parameters: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.parameters.insert(key.to_string(), value.into());
    }

    pub fn finish(self, exit_code: i32, error: Option<String>) -> RunManifest {
        let mut versions = BTreeMap::new();
        versions.insert("protogmm", protogmm::VERSION);
        versions.insert("protogmm-cli", env!("CARGO_PKG_VERSION"));
        RunManifest {
            command: self.command,
            seed: self.seed,
            status: if exit_code == 0 { "ok" } else { "error" },
            exit_code,
            error,
            config: self.config,
            parameters: self.parameters,
            artifacts: self.artifacts,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
            versions,
        }
    }
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}
