//! `manifest.json`: what a run read, how it was configured and what it wrote.
//!
//! The config hash is the SHA-256 of the effective configuration serialized
//! as JSON with sorted keys, so it is stable across runs and platforms.
//! Timings are wall-clock and the only non-reproducible field.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::io;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of `config` in canonical form.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    // `serde_json::Value` keeps object keys sorted, which canonicalizes.
    let value = serde_json::to_value(config)?;
    Ok(sha256_hex(serde_json::to_string(&value)?.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverged: Option<bool>,
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &'static str, config: &T, seed: u64) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: config_hash(config)?,
            seed,
            diverged: None,
            timings: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn add_output(&mut self, file: &str, bytes: &[u8]) {
        self.outputs.push(OutputEntry {
            file: file.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        io::write_bytes(&dir.join("manifest.json"), text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_ignores_key_order() {
        let a = serde_json::json!({ "b": 1, "a": [1.5, 2] });
        let mut m = serde_json::Map::new();
        m.insert("a".into(), serde_json::json!([1.5, 2]));
        m.insert("b".into(), 1.into());
        assert_eq!(config_hash(&a).unwrap(), config_hash(&m).unwrap());
        assert_ne!(
            config_hash(&a).unwrap(),
            config_hash(&serde_json::json!({ "b": 2 })).unwrap()
        );
    }
}
