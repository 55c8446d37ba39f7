//! Run manifests: everything needed to reproduce a command bit-exactly.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub prior: serde_json::Value,
    pub seed: u64,
    pub chain_streams: Vec<u64>,
    pub input_hashes: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    pub version: String,
    pub wall_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config: serde_json::Value::Null,
            prior: serde_json::Value::Null,
            seed: 0,
            chain_streams: Vec::new(),
            input_hashes: BTreeMap::new(),
            artifacts: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_secs: 0.0,
        }
    }

    pub fn hash_input(&mut self, path: &Path) -> Result<()> {
        let bytes =
            std::fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        self.input_hashes.insert(path.display().to_string(), hex::encode(digest));
        Ok(())
    }

    pub fn add_artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}
