//! The dataset manifest: one entry per generated sample, with the paths of
//! every derived artifact and the sample's fold/split assignment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evalkit::Split;
use crate::pipeline::PipelineError;
use crate::sigsim::SignalClass;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub class: SignalClass,
    pub seed: u64,
    /// Paths are relative to the data directory so manifests are
    /// byte-identical wherever the dataset lives.
    pub raw: PathBuf,
    pub image: PathBuf,
    pub preprocessed: PathBuf,
    pub fold: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config_hash: String,
    pub dataset_hash: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn path_in(data_dir: &Path) -> PathBuf {
        data_dir.join("manifest.json")
    }

    pub fn save(&self, data_dir: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(Self::path_in(data_dir), json)?;
        Ok(())
    }

    pub fn load(data_dir: &Path) -> Result<DatasetManifest, PipelineError> {
        let path = Self::path_in(data_dir);
        if !path.exists() {
            return Err(PipelineError::MissingFile(path));
        }
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Hard error when the manifest was generated from a different dataset
    /// section than the current configuration.
    pub fn check_dataset_hash(&self, current: &str) -> Result<(), PipelineError> {
        if self.dataset_hash != current {
            return Err(PipelineError::HashMismatch {
                artifact: self.dataset_hash.clone(),
                current: current.to_string(),
            });
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.class.code()).collect()
    }

    pub fn class_counts(&self) -> [usize; SignalClass::COUNT] {
        let mut counts = [0usize; SignalClass::COUNT];
        for e in &self.entries {
            counts[e.class.code()] += 1;
        }
        counts
    }
}
