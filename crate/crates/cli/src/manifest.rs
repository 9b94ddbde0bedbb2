//! Run manifests: what command ran, with which resolved settings, over
//! which exact input bytes, producing which outputs.
//!
//! Digests are SHA-256 over raw file bytes, hex-encoded. The timestamp
//! is Unix seconds; setting `SOURCE_DATE_EPOCH` pins it, which is how
//! reproducibility tests obtain byte-identical reports across runs.
//! The worker thread count is deliberately absent: results are
//! thread-count-invariant, so it is an execution detail, not
//! provenance.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InputDigest {
    /// What the file was used as: "model", "features", "config", ...
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Command-specific resolved settings after flag/config merging.
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    /// Unix seconds; honors SOURCE_DATE_EPOCH.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timestamp: timestamp(),
        }
    }

    /// Digests `path` and records it under `role`.
    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        self.inputs.push(InputDigest {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes the manifest as a sidecar file next to an output that
    /// cannot embed it (CSV, model files with a fixed schema).
    pub fn write_sidecar(&self, output: &Path) -> Result<(), CliError> {
        let path = sidecar_path(output);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json + "\n").map_err(io_err(path))?;
        Ok(())
    }
}

/// `<output>.manifest.json`.
pub fn sidecar_path(output: &Path) -> std::path::PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Unix seconds, pinned by SOURCE_DATE_EPOCH when set.
pub fn timestamp() -> u64 {
    if let Ok(raw) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(v) = raw.parse::<u64>() {
            return v;
        }
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
