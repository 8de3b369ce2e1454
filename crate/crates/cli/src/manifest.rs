//! Run manifest: what was run, with which configuration, and a checksum of
//! every output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::hex_digest;
use crate::error::{CliError, CliResult};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    /// Model simulations actually run.
    pub evaluations: u64,
    pub cache_hits: u64,
    pub versions: BTreeMap<String, String>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
    #[serde(default)]
    pub files: Vec<FileRecord>,
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Manifest(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

impl RunManifest {
    pub fn record(name: &str, bytes: &[u8]) -> FileRecord {
        FileRecord {
            name: name.to_string(),
            sha256: hex_digest(bytes),
            bytes: bytes.len() as u64,
        }
    }

    pub fn to_text(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Manifest(e.to_string()))
    }

    pub fn from_text(text: &str) -> CliResult<Self> {
        let m: Self = toml::from_str(text).map_err(|e| CliError::Manifest(e.to_string()))?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(CliError::Manifest(format!(
                "unsupported manifest version {}",
                m.manifest_version
            )));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, self.to_text()?.as_bytes())
    }

    /// Discrepancies between the listed files (relative to `dir`) and their
    /// recorded sizes and checksums. Empty when everything matches.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        let mut problems = Vec::new();
        if self.status != RunStatus::Complete {
            problems.push(format!(
                "run is marked incomplete: {}",
                self.error.as_deref().unwrap_or("no reason given")
            ));
        }
        for rec in &self.files {
            let path: PathBuf = dir.join(&rec.name);
            match fs::read(&path) {
                Err(e) => problems.push(format!("{}: cannot read ({e})", rec.name)),
                Ok(bytes) => {
                    if bytes.len() as u64 != rec.bytes {
                        problems.push(format!(
                            "{}: size {} differs from recorded {}",
                            rec.name,
                            bytes.len(),
                            rec.bytes
                        ));
                    }
                    if hex_digest(&bytes) != rec.sha256 {
                        problems.push(format!("{}: checksum mismatch", rec.name));
                    }
                }
            }
        }
        problems
    }
}
