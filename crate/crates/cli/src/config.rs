use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shrinktube::plant::Scenario;

use crate::exit::{CliError, Exit};

/// Everything a run reads from its configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Parent of the run directories; `--out` and `SHRINKTUBE_OUT` take
    /// precedence. Not part of the config hash.
    pub output_dir: Option<PathBuf>,
    pub audit: AuditConfig,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub trials: usize,
    pub steps: usize,
    /// Allowed violation rate; the record's `alpha_uniform` when absent.
    pub budget: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 42, output_dir: None, audit: AuditConfig::default(), scenario: Scenario::default() }
    }
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { trials: 100, steps: 100, budget: None }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(Exit::Io, format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::new(Exit::Config, format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario.validate().map_err(|e| CliError::new(Exit::Config, e.to_string()))?;
        if let Some(b) = self.audit.budget {
            if !(0.0..1.0).contains(&b) {
                return Err(CliError::new(Exit::Config, format!("audit.budget: must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, with the output directory
    /// cleared.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = None;
        let json = serde_json::to_string(&canon).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = None;
        toml::to_string(&canon).expect("config serializes")
    }
}
