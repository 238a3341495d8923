//! Pipeline configuration loaded from TOML.
//!
//! Every section and field is optional; missing values take their defaults
//! and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditioning::ConditioningConfig;
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::orchestrator::{BackendConfig, RepairConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Worker threads for batch commands.
    pub jobs: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self { jobs: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub conditioning: ConditioningConfig,
    pub repair: RepairConfig,
    pub backend: BackendConfig,
    pub runtime: RuntimeConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path.to_path_buf())),
            Err(e) => return Err(e.into()),
        };
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical TOML rendering. Loading the output and dumping it again
    /// yields identical bytes.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical TOML, recorded in eval reports. The
    /// runtime section is excluded since it cannot change any output.
    pub fn hash(&self) -> Result<String> {
        let outputs_only = PipelineConfig {
            runtime: RuntimeConfig::default(),
            ..self.clone()
        };
        Ok(hex::encode(Sha256::digest(outputs_only.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.conditioning.validate()?;
        self.repair.validate()?;
        self.backend.validate()?;
        if self.runtime.jobs == 0 {
            return Err(Error::Config("runtime.jobs must be positive".into()));
        }
        Ok(())
    }
}
