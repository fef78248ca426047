//! Run configuration file (JSON). Command-line flags override individual fields.

use std::path::{Path, PathBuf};

use anyhow::Context;
use riskwatch_core::nn::{ModelConfig, TrainingConfig};
use riskwatch_core::pipeline::ColumnMapping;
use riskwatch_core::sensor::ScenarioLibrary;
use riskwatch_core::ScoringConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset_csv: Option<PathBuf>,
    pub model: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset_csv: None,
            model: "model.bin".into(),
            reports_dir: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Services {
    pub inference_port: u16,
    pub gateway_port: u16,
    pub inference_url: String,
    pub gateway_url: String,
    pub threshold: usize,
    pub single_session: bool,
}

impl Default for Services {
    fn default() -> Self {
        Services {
            inference_port: 5000,
            gateway_port: 8080,
            inference_url: "http://localhost:5000".into(),
            gateway_url: "http://localhost:8080".into(),
            threshold: 180,
            single_session: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub columns: ColumnMapping,
    pub scoring: ScoringConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub services: Services,
    pub corpus: ScenarioLibrary,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let usage = |e: riskwatch_core::Error| UsageError(e.to_string());
        self.scoring.validate().map_err(usage)?;
        self.model.validate().map_err(usage)?;
        self.training.validate().map_err(usage)?;
        self.corpus.validate().map_err(usage)?;
        Ok(())
    }
}
