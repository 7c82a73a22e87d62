//! Output directory bookkeeping: every file is hashed as it is written and
//! `manifest.json` goes last.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub run_id: String,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub tool_version: String,
    pub files: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Short hash of the resolved configuration.
pub fn run_id(command: &str, config: &BTreeMap<String, String>) -> String {
    let mut text = format!("{command}\n");
    for (k, v) in config {
        text.push_str(&format!("{k}={v}\n"));
    }
    sha256_hex(text.as_bytes())[..12].to_string()
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Writes files into one directory and remembers their digests.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        // A stale manifest would claim a completed run.
        let stale = root.join(MANIFEST);
        if stale.exists() {
            fs::remove_file(stale)?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        fs::write(self.root.join(name), contents)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileDigest {
            name: name.into(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
        manifest.files = self.files;
        manifest.finished_unix = unix_now();
        let text =
            serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Usage(e.to_string()))?;
        let path = self.root.join(MANIFEST);
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
