use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::format::sha256_file;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GIT_DESCRIBE: &str = env!("RAMSEY_PROBE_GIT_DESCRIBE");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// File name relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::metadata(path).map_err(|e| CliError::io(path, e))?.len();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Self { path: name, bytes, sha256: sha256_file(path)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub git_describe: String,
    pub config: RunConfig,
    pub master_seed: u64,
    /// Threads used; results do not depend on it.
    pub threads: Option<usize>,
    pub n_outcomes: usize,
    pub repetitions: usize,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<FileDigest>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Recomputes every digest in `manifest` relative to `dir`; returns the
/// names of files that differ.
pub fn verify(manifest: &RunManifest, dir: &Path) -> CliResult<Vec<String>> {
    let mut mismatched = Vec::new();
    for entry in &manifest.outputs {
        let actual = FileDigest::of(&dir.join(&entry.path))?;
        if actual.sha256 != entry.sha256 || actual.bytes != entry.bytes {
            mismatched.push(entry.path.clone());
        }
    }
    Ok(mismatched)
}
