//! Per-stage provenance manifests.
//!
//! Every subcommand writes a `manifest.json` next to its outputs
//! recording the stage settings, the seed, and SHA-256 hashes of all
//! inputs (including upstream manifests) and outputs. [`verify_chain`]
//! re-hashes everything, so a run's artifacts are checkable end to end.

use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output root.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub settings: serde_json::Value,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub elapsed_ms: u64,
    pub created_unix_ms: u64,
}

/// SHA-256 of a file's contents, hex encoded.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Collects inputs/outputs and writes the stage manifest.
pub struct ManifestBuilder {
    root: PathBuf,
    stage: String,
    seed: u64,
    settings: serde_json::Value,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    started: std::time::Instant,
}

impl ManifestBuilder {
    pub fn new(root: &Path, stage: &str, seed: u64, settings: serde_json::Value) -> Self {
        ManifestBuilder {
            root: root.to_path_buf(),
            stage: stage.to_string(),
            seed,
            settings,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: std::time::Instant::now(),
        }
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).display().to_string()
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let entry = FileEntry { path: self.relative(path), sha256: sha256_file(path)? };
        self.inputs.push(entry);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let entry = FileEntry { path: self.relative(path), sha256: sha256_file(path)? };
        self.outputs.push(entry);
        Ok(())
    }

    /// Write `manifest.json` into the stage directory and return its path.
    pub fn write(self, stage_dir: &Path) -> Result<PathBuf> {
        let manifest = Manifest {
            stage: self.stage,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            settings: self.settings,
            inputs: self.inputs,
            outputs: self.outputs,
            elapsed_ms: self.started.elapsed().as_millis() as u64,
            created_unix_ms: SystemTime::now()
                .duration_since(SystemTime::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        };
        let path = stage_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Data(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn read_manifest(stage_dir: &Path) -> Result<Manifest> {
    let path = stage_dir.join("manifest.json");
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::MalformedFile { path, reason: e.to_string() })
}

/// Verify that every stage's recorded hashes still match the files on
/// disk. Returns the verified stages in order.
pub fn verify_chain(root: &Path, stages: &[&str]) -> Result<Vec<String>> {
    let mut verified = Vec::new();
    for stage in stages {
        let dir = root.join(stage);
        if !dir.join("manifest.json").exists() {
            continue;
        }
        let manifest = read_manifest(&dir)?;
        for entry in manifest.inputs.iter().chain(manifest.outputs.iter()) {
            let path = root.join(&entry.path);
            let actual = sha256_file(&path)?;
            if actual != entry.sha256 {
                return Err(Error::Data(format!(
                    "hash mismatch for {} recorded by stage {stage}",
                    entry.path
                )));
            }
        }
        verified.push(manifest.stage);
    }
    Ok(verified)
}
