//! Run manifests: the resolved config plus hashes of everything a command
//! read and wrote.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    /// Input files keyed by path, as SHA-256 hex digests.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Written files keyed by path relative to the output directory.
    #[serde(default)]
    pub artifacts: BTreeMap<String, String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, config: RunConfig) -> Self {
        Manifest {
            command: command.to_string(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            config,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid manifest")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.toml")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}
