use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use cashplan_core::solver::SolveOptions;
use cashplan_core::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub backend: String,
    pub options: SolveOptions,
}

/// Provenance of one command run. Written last, into the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub arguments: Vec<String>,
    pub config: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub solver: Option<SolverRecord>,
    pub output_dir: String,
    /// Seconds since the epoch; taken from SOURCE_DATE_EPOCH when set.
    pub timestamp: u64,
    /// sha256 of every artifact, keyed by file name.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, out: &Path) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            arguments: std::env::args().skip(1).collect(),
            config: None,
            seeds: BTreeMap::new(),
            solver: None,
            output_dir: out.display().to_string(),
            timestamp: timestamp(),
            artifacts: BTreeMap::new(),
        }
    }

    /// Checksums `files` (relative to the output directory) and writes the manifest.
    pub fn finish(mut self, out: &Path, files: &[String]) -> Result<()> {
        for f in files {
            let bytes = fs::read(out.join(f))?;
            self.artifacts.insert(f.clone(), sha256_hex(&bytes));
        }
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        fs::write(out.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
