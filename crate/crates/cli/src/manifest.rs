//! `manifest.json`: what a run read, how it was configured, what it wrote.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub struct RunRecord<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<(&'a str, PathBuf)>,
    pub outputs: Vec<PathBuf>,
}

impl<'a> RunRecord<'a> {
    pub fn new(command: &'a str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(RunRecord {
            command,
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, label: &'a str, path: Option<&Path>) {
        if let Some(p) = path {
            self.inputs.push((label, p.to_path_buf()));
        }
    }

    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let hashed = json!({ "command": self.command, "seed": self.seed, "config": self.config });
        let mut inputs = serde_json::Map::new();
        for (label, path) in &self.inputs {
            inputs.insert(
                label.to_string(),
                json!({ "path": path.display().to_string(), "sha256": file_digest(path)? }),
            );
        }
        let outputs: Vec<String> = self
            .outputs
            .iter()
            .map(|p| p.strip_prefix(out_dir).unwrap_or(p).display().to_string())
            .collect();
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = json!({
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "config_sha256": sha256_hex(hashed.to_string().as_bytes()),
            "inputs": inputs,
            "outputs": outputs,
            "created_unix_seconds": created,
        });
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&manifest)?))
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
