use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::model::ModelSpec;
use crate::stats::Estimate;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A model file and the SHA-256 of its bytes at the time the manifest was
/// written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRef {
    pub path: PathBuf,
    pub sha256: String,
}

impl ModelRef {
    pub fn new(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let bytes = std::fs::read(&path)
            .map_err(|e| LabError::Io(e).context(format!("reading {}", path.display())))?;
        Ok(ModelRef {
            sha256: sha256_hex(&bytes),
            path,
        })
    }

    /// Reads and parses the model, refusing a file whose bytes no longer
    /// match the recorded hash.
    pub fn load(&self) -> Result<ModelSpec> {
        let bytes = std::fs::read(&self.path)
            .map_err(|e| LabError::Io(e).context(format!("reading {}", self.path.display())))?;
        let found = sha256_hex(&bytes);
        if found != self.sha256 {
            return Err(LabError::StaleManifest(format!(
                "{} hashes to {found}, manifest records {}",
                self.path.display(),
                self.sha256
            )));
        }
        let text = String::from_utf8(bytes).map_err(|e| LabError::Malformed(e.to_string()))?;
        ModelSpec::from_json(&text)
    }
}

/// Everything needed to replay one operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelRef>,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub seed: u64,
    pub version: String,
}

#[derive(Serialize)]
struct Identity<'a> {
    op: &'a str,
    model: Option<&'a str>,
    params: &'a serde_json::Value,
    seed: u64,
    version: &'a str,
}

impl ExperimentManifest {
    pub fn new(
        op: impl Into<String>,
        model: Option<ModelRef>,
        params: serde_json::Value,
        seed: u64,
    ) -> Self {
        ExperimentManifest {
            op: op.into(),
            model,
            params,
            seed,
            version: TOOL_VERSION.to_string(),
        }
    }

    /// Content hash over the operation, the model bytes (not its path),
    /// the parameters, the seed and the tool version.
    pub fn hash(&self) -> String {
        let id = Identity {
            op: &self.op,
            model: self.model.as_ref().map(|m| m.sha256.as_str()),
            params: &self.params,
            seed: self.seed,
            version: &self.version,
        };
        sha256_hex(&serde_json::to_vec(&id).expect("manifest serializes"))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Output of one manifest run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub manifest_hash: String,
    pub op: String,
    pub scalars: BTreeMap<String, Estimate>,
    /// CSV payloads, written as sidecars `<name>.csv` by the store.
    pub tables: BTreeMap<String, String>,
    pub checks: BTreeMap<String, bool>,
    /// The operation's full report.
    pub summary: serde_json::Value,
}

impl ResultRecord {
    pub fn new(manifest: &ExperimentManifest) -> Self {
        ResultRecord {
            manifest_hash: manifest.hash(),
            op: manifest.op.clone(),
            scalars: BTreeMap::new(),
            tables: BTreeMap::new(),
            checks: BTreeMap::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn scalar(&mut self, name: &str, value: Estimate) -> &mut Self {
        self.scalars.insert(name.to_string(), value);
        self
    }

    pub fn exact(&mut self, name: &str, value: f64) -> &mut Self {
        self.scalar(name, Estimate::exact(value))
    }

    pub fn table(&mut self, name: &str, csv: String) -> &mut Self {
        self.tables.insert(name.to_string(), csv);
        self
    }

    pub fn check(&mut self, name: &str, passed: bool) -> &mut Self {
        self.checks.insert(name.to_string(), passed);
        self
    }

    pub fn summary<T: Serialize>(&mut self, report: &T) -> Result<&mut Self> {
        self.summary = serde_json::to_value(report)?;
        Ok(self)
    }

    pub fn passed(&self) -> bool {
        self.checks.values().all(|&p| p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}
