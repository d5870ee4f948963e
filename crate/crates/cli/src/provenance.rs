use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use utd_core::corpus::json;
use utd_core::debias::DEFAULT_SEEDS;

use crate::config::RunConfig;

/// What produced a set of outputs. Holds content hashes and file names only,
/// so runs in different directories record identical provenance.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub settings: serde_json::Value,
    pub models: BTreeMap<&'static str, String>,
    pub seeds: Vec<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Provenance {
    /// `settings` are the command options that affect results.
    pub fn new(command: &'static str, config: &RunConfig, settings: impl Serialize) -> Result<Self> {
        let settings = serde_json::to_value(settings)?;
        let canonical = json::to_sorted_string(&serde_json::json!({"config": config, "settings": settings}))?;
        Ok(Provenance {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: hex::encode(Sha256::digest(canonical.as_bytes())),
            settings,
            models: BTreeMap::new(),
            seeds: config.seeds.clone().unwrap_or_else(|| DEFAULT_SEEDS.to_vec()),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn model(mut self, role: &'static str, id: &str) -> Self {
        self.models.insert(role, id.to_owned());
        self
    }

    /// Overrides the configured seeds with the ones a command actually used.
    pub fn seeds(mut self, seeds: &[u64]) -> Self {
        self.seeds = seeds.to_vec();
        self
    }

    /// Records the SHA-256 of an input file under `label`.
    pub fn input(mut self, label: &str, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(label.to_owned(), hex::encode(Sha256::digest(&bytes)));
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(file_name(path));
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        self.outputs.sort();
        json::write_sorted(path, &self)?;
        Ok(())
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `out/split.json` becomes `out/split.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}
