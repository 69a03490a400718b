//! Run manifests written next to every command's outputs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Manifest path for a single-file output.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Digest of the effective configuration as serialized JSON.
    pub config_sha256: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
    pub created: String,
}

/// `SOURCE_DATE_EPOCH` when set, otherwise now.
fn created() -> String {
    let ts = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| DateTime::<Utc>::from_timestamp(s, 0))
        .unwrap_or_else(Utc::now);
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

impl RunManifest {
    pub fn new(command: &str, config_json: &str, parameters: serde_json::Value) -> Self {
        Self {
            tool: "shiftlens",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
            created: created(),
        }
    }

    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    /// Record `bytes` as written to `rel` under the manifest directory.
    pub fn output(&mut self, rel: &str, bytes: &[u8]) {
        self.outputs.push(FileDigest {
            path: rel.to_owned(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn write(&mut self, path: &Path) -> io::Result<PathBuf> {
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let mut doc = serde_json::to_string_pretty(self).expect("manifest serializes");
        doc.push('\n');
        fs::write(path, doc)?;
        Ok(path.to_owned())
    }
}

/// Writes a file and records it in the manifest.
pub struct OutputDir<'a> {
    pub dir: PathBuf,
    pub manifest: &'a mut RunManifest,
}

impl OutputDir<'_> {
    pub fn put(&mut self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.manifest.output(rel, bytes);
        Ok(())
    }
}
