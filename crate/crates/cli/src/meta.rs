//! Provenance metadata written next to every command output.
//!
//! Contains the tool version, the command, the fully resolved
//! configuration, and digests of the inputs — enough to trace any artifact
//! back to one invocation. Deliberately no timestamps: reruns must be
//! byte-comparable.

use std::path::Path;

use stylevec_core::rng::sha256_hex;
use stylevec_core::{Error, Result};

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub struct MetaBuilder {
    command: &'static str,
    resolved: serde_json::Value,
    inputs: Vec<(String, String)>,
}

impl MetaBuilder {
    pub fn new(command: &'static str, resolved: serde_json::Value) -> Self {
        MetaBuilder {
            command,
            resolved,
            inputs: Vec::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.push((
            path.display().to_string(),
            file_digest(path)?,
        ));
        Ok(self)
    }

    /// Write `meta.json` inside `dir` (for directory outputs) or
    /// `<file>.meta.json` next to a file output.
    pub fn write(self, out: &Path, is_dir: bool) -> Result<()> {
        let inputs: serde_json::Map<String, serde_json::Value> = self
            .inputs
            .into_iter()
            .map(|(k, v)| (k, serde_json::Value::String(v)))
            .collect();
        let meta = serde_json::json!({
            "tool": "stylevec",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "resolved": self.resolved,
            "inputs": inputs,
        });
        let path = if is_dir {
            out.join("meta.json")
        } else {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".meta.json");
            out.with_file_name(name)
        };
        stylevec_core::util::atomic_write(
            &path,
            serde_json::to_string_pretty(&meta)
                .map_err(|e| Error::Data(format!("meta serialization: {e}")))?
                .as_bytes(),
        )
    }
}
