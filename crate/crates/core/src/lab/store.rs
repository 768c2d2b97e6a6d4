use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};

use super::manifest::{ExperimentManifest, ResultRecord};

pub const RESULT_DIR_ENV: &str = "LAB_RESULT_DIR";
const DEFAULT_ROOT: &str = "lab-results";

/// Append-only, content-addressed store: one directory per manifest hash
/// holding `manifest.json`, `record.json`, one `<table>.csv` per table and
/// any binary attachments.
#[derive(Debug, Clone)]
pub struct ResultStore {
    root: PathBuf,
}

impl ResultStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResultStore { root: root.into() }
    }

    /// `$LAB_RESULT_DIR`, else `./lab-results`.
    pub fn from_env() -> Self {
        let root = std::env::var_os(RESULT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT));
        ResultStore::new(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry(&self, manifest_hash: &str) -> PathBuf {
        self.root.join(manifest_hash)
    }

    /// Writes the entry into a staging directory and renames it into place.
    /// An existing entry is left alone when it holds the same record and is
    /// an error otherwise.
    pub fn put(
        &self,
        manifest: &ExperimentManifest,
        record: &ResultRecord,
        attachments: &[(String, Vec<u8>)],
    ) -> Result<PathBuf> {
        let hash = manifest.hash();
        if record.manifest_hash != hash {
            return Err(LabError::StaleManifest(format!(
                "record belongs to {}, manifest is {hash}",
                record.manifest_hash
            )));
        }
        let dest = self.entry(&hash);
        if dest.exists() {
            return self.check_existing(&dest, record);
        }
        std::fs::create_dir_all(&self.root)?;
        let staging = self
            .root
            .join(format!(".staging-{hash}-{}", std::process::id()));
        if staging.exists() {
            std::fs::remove_dir_all(&staging)?;
        }
        std::fs::create_dir(&staging)?;
        std::fs::write(staging.join("manifest.json"), manifest.to_json())?;
        std::fs::write(staging.join("record.json"), record.to_json())?;
        for (name, csv) in &record.tables {
            std::fs::write(staging.join(format!("{name}.csv")), csv)?;
        }
        for (name, bytes) in attachments {
            std::fs::write(staging.join(name), bytes)?;
        }
        match std::fs::rename(&staging, &dest) {
            Ok(()) => Ok(dest),
            Err(_) if dest.exists() => {
                // another writer got there first
                std::fs::remove_dir_all(&staging)?;
                self.check_existing(&dest, record)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn check_existing(&self, dest: &Path, record: &ResultRecord) -> Result<PathBuf> {
        let stored = ResultRecord::from_json(&std::fs::read_to_string(dest.join("record.json"))?)?;
        if &stored != record {
            return Err(LabError::StaleManifest(format!(
                "{} already holds a different record (stored {}, new {})",
                dest.display(),
                stored.hash(),
                record.hash()
            )));
        }
        Ok(dest.to_path_buf())
    }

    /// The stored record for `manifest`, if any. The manifest's model file
    /// must still hash to the recorded value.
    pub fn get(&self, manifest: &ExperimentManifest) -> Result<Option<ResultRecord>> {
        if let Some(model) = &manifest.model {
            model.load()?;
        }
        let path = self.entry(&manifest.hash()).join("record.json");
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(ResultRecord::from_json(&std::fs::read_to_string(
            path,
        )?)?))
    }
}
