//! Results directories. The manifest is written last; a directory without
//! one is incomplete and is never read back.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use acnoise_core::Error;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub verdicts: Vec<Verdict>,
    pub files: Vec<FileEntry>,
    pub wall_seconds: f64,
    pub replicas: u64,
    pub seconds_per_replica: f64,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.is_file() {
            return Err(Error::MissingManifest(dir.to_path_buf()).into());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())).into())
    }
}

pub struct ResultsDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
    started: Instant,
}

impl ResultsDir {
    /// Creates `dir` and removes any stale manifest so an interrupted run stays incomplete.
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let stale = dir.join(MANIFEST);
        if stale.exists() {
            fs::remove_file(&stale)?;
        }
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), started: Instant::now() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn finish(self, command: &str, config_hash: String, verdicts: Vec<Verdict>, replicas: u64) -> Result<()> {
        let wall_seconds = self.started.elapsed().as_secs_f64();
        let manifest = RunManifest {
            command: command.to_string(),
            config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            verdicts,
            files: self.files,
            wall_seconds,
            replicas,
            seconds_per_replica: if replicas > 0 { wall_seconds / replicas as f64 } else { 0.0 },
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(())
    }
}
