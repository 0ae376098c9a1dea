//! JSON artifacts: dataset bundles, embedding and policy checkpoints. Each
//! carries the full config and its hash, and checkpoints name the
//! fingerprints (SHA-256 of file bytes) of what they were built from.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use kgcrs_core::config::RunConfig;
use kgcrs_core::dataset::Dataset;
use kgcrs_core::embed::{EmbedParams, TrainLog};
use kgcrs_core::policy::{PolicyOptimizer, PolicyParams};
use kgcrs_core::session::EpochLog;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::config_hash;
use crate::formats::Vocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub config_hash: String,
    pub config: RunConfig,
}

impl Header {
    pub fn new(kind: &str, cfg: &RunConfig) -> Self {
        Header { kind: kind.to_string(), config_hash: config_hash(cfg), config: cfg.clone() }
    }
}

pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;
    fn header(&self) -> &Header;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub header: Header,
    pub vocab: Vocab,
    pub dataset: Dataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCheckpoint {
    pub header: Header,
    pub dataset: String,
    /// `pretrain` or `offline`.
    pub stage: String,
    pub params: EmbedParams,
    pub log: TrainLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub header: Header,
    pub dataset: String,
    pub embedding: String,
    pub params: PolicyParams,
    pub optimizer: Option<PolicyOptimizer>,
    pub pretrain_losses: Vec<f64>,
    pub epochs: Vec<EpochLog>,
}

macro_rules! artifact {
    ($t:ty, $kind:literal) => {
        impl Artifact for $t {
            const KIND: &'static str = $kind;
            fn header(&self) -> &Header {
                &self.header
            }
        }
    };
}

artifact!(DatasetBundle, "dataset");
artifact!(EmbeddingCheckpoint, "embedding");
artifact!(PolicyCheckpoint, "policy");

pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the artifact and returns its fingerprint.
pub fn save<T: Artifact>(path: &Path, value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(fingerprint(&bytes))
}

/// Reads an artifact, refusing other kinds and other configurations.
pub fn load<T: Artifact>(path: &Path, cfg: &RunConfig) -> Result<(T, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let value: T = serde_json::from_slice(&bytes).with_context(|| format!("{} is not a {} artifact", path.display(), T::KIND))?;
    let h = value.header();
    if h.kind != T::KIND {
        bail!("{} holds a {} artifact, expected {}", path.display(), h.kind, T::KIND);
    }
    let want = config_hash(cfg);
    if h.config_hash != want {
        bail!(
            "{} was produced under config {} but the current config hashes to {}; rerun with the same config file and overrides",
            path.display(),
            h.config_hash,
            want
        );
    }
    Ok((value, fingerprint(&bytes)))
}

/// Fails unless `actual` is the fingerprint recorded as `what`.
pub fn check_upstream(what: &str, recorded: &str, actual: &str) -> Result<()> {
    if recorded != actual {
        bail!("{what} fingerprint mismatch: checkpoint expects {recorded}, found {actual}");
    }
    Ok(())
}
