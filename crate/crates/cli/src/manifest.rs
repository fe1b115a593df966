//! Reproducibility record written beside every artifact set: the resolved
//! configuration plus content hashes of all inputs and outputs.

use std::fs;
use std::path::{Path, PathBuf};

use fairgrad::error::{Error, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub struct Manifest {
    command: String,
    config: Value,
    inputs: Vec<Value>,
    outputs: Vec<Value>,
}

impl Manifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(stamp(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(stamp(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let record = json!({
            "tool": "fairgrad",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        let text = serde_json::to_string_pretty(&record)
            .map_err(|e| Error::Data(format!("manifest serialization: {e}")))?;
        let path = dir.join("manifest.json");
        fs::write(&path, text)?;
        Ok(path)
    }
}

fn stamp(path: &Path) -> Result<Value> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(json!({
        "path": path.display().to_string(),
        "sha256": format!("{:x}", hasher.finalize()),
        "bytes": bytes.len(),
    }))
}
