//! Run manifests: what was run, with which configuration and seed, producing which files.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub camel: &'static str,
    pub cue_format: u32,
    pub weights_format: u32,
}

/// No timestamps or host details, so reruns produce identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub model_config_hash: Option<String>,
    pub versions: Versions,
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            args,
            seed: None,
            config_hash: None,
            model_config_hash: None,
            versions: Versions {
                camel: env!("CARGO_PKG_VERSION"),
                cue_format: crate::dataio::cues::CUE_VERSION,
                weights_format: crate::dataio::weights::WEIGHTS_VERSION,
            },
            outputs: Vec::new(),
        }
    }

    /// Records every file in `paths`, relative to `base` where possible, hashed.
    pub fn add_outputs(&mut self, base: &Path, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            let bytes = std::fs::read(p)?;
            let rel = p.strip_prefix(base).unwrap_or(p);
            self.outputs.push(OutputEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::dataio::sequence::write_file(path, serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Manifest location for a file output: `<file>.manifest.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}
