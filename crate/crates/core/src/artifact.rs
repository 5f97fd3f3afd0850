//! On-disk formats connecting the pipeline stages.
//!
//! JSON artifacts are wrapped in an [`Envelope`] carrying the tool version,
//! seed and a hash of the configuration that produced them.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learn::TreeEnsembleModel;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub tool_version: String,
    pub seed: u64,
    /// SHA-256 of the compact JSON encoding of the stage configuration.
    pub config_hash: String,
}

impl ArtifactMeta {
    pub fn new<C: Serialize>(seed: u64, config: &C) -> Self {
        let encoded = serde_json::to_vec(config).expect("configs serialize");
        ArtifactMeta {
            tool_version: TOOL_VERSION.to_string(),
            seed,
            config_hash: sha256_hex(&encoded),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope<T> {
    pub meta: ArtifactMeta,
    pub stage: String,
    pub data: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(stage: &str, meta: ArtifactMeta, data: T) -> Self {
        Envelope {
            meta,
            stage: stage.to_string(),
            data,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifacts serialize");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }
}

/// Reads an envelope, checking that it was written by `stage`.
pub fn read_envelope<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<Envelope<T>> {
    let text = read_text(path)?;
    let env: Envelope<T> = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: not a {stage} artifact: {e}", path.display())))?;
    if env.stage != stage {
        return Err(Error::Schema(format!(
            "{}: expected a {stage} artifact, found {}",
            path.display(),
            env.stage
        )));
    }
    Ok(env)
}

pub fn read_model(path: &Path) -> Result<Envelope<TreeEnsembleModel>> {
    let env: Envelope<TreeEnsembleModel> = read_envelope(path, "train")?;
    // re-validate the format version through the model's own loader
    TreeEnsembleModel::from_json(&env.data.to_json())?;
    Ok(env)
}

/// `SOURCE_DATE_EPOCH` as an RFC 3339 timestamp, for reproducible reports.
pub fn source_date() -> Option<String> {
    let secs: i64 = std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()?;
    let t = chrono::DateTime::from_timestamp(secs, 0)?;
    Some(t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One feature name per line; blank lines and `#` comments are ignored.
pub fn read_feature_list(path: &Path) -> Result<Vec<String>> {
    let names: Vec<String> = read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    if names.is_empty() {
        return Err(Error::Schema(format!("{}: empty feature list", path.display())));
    }
    Ok(names)
}

pub fn write_feature_list(path: &Path, names: &[String]) -> Result<()> {
    let mut text = names.join("\n");
    text.push('\n');
    write_text(path, &text)
}
