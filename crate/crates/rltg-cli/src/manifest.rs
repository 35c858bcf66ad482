//! Per-run manifest: the resolved config, the seed, content hashes of
//! every input and output artifact, and the decisions that vary per run
//! (topic source, step-count convention, reference sampling). A manifest
//! plus the corpus fully determines the run's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub seed: u64,
    pub config: RunConfig,
    /// file name -> sha256 of the file's bytes
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// run-log entries for choices the log must record
    pub notes: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes =
        fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn new(subcommand: &str, config: &RunConfig) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            seed: config.seed,
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let name = file_name(path);
        self.inputs.insert(name, hash_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let name = file_name(path);
        self.outputs.insert(name, hash_file(path)?);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.insert(key.to_string(), value.into());
    }

    /// Writes `manifest.json` into the out dir.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join(MANIFEST_FILE);
        let body = serde_json::to_string_pretty(self).context("encoding manifest")?;
        fs::write(&path, body + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| path.to_string_lossy().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Preset, RunConfig};

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_and_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("corpus.jsonl");
        fs::write(&input, b"{}").unwrap();
        let cfg = RunConfig::preset(Preset::Desk);
        let mut m = Manifest::new("train-lm", &cfg);
        m.record_input(&input).unwrap();
        m.note("topic_source", "prefix");
        m.write(dir.path()).unwrap();
        let a = fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        m.write(dir.path()).unwrap();
        let b = fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(a, b);
        let parsed: Manifest = serde_json::from_slice(&a).unwrap();
        assert_eq!(parsed.subcommand, "train-lm");
        assert!(parsed.inputs.contains_key("corpus.jsonl"));
    }
}
