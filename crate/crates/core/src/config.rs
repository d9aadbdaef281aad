use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DiscretizerSpec, IngestConfig};
use crate::model::ModelConfig;
use crate::synth::WorldSpec;
use crate::train::TrainConfig;
use crate::{CoreError, Result};

/// Finite-difference settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub h: f64,
    pub tol: f64,
    /// Windows in the checked batch.
    pub sequences: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            sequences: 4,
        }
    }
}

/// Every setting a command can read, as one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub ingest: IngestConfig,
    pub discretizer: DiscretizerSpec,
    pub window_len: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub folds: usize,
    /// Fold used by single-fold commands.
    pub fold: usize,
    /// Review window sizes compared by the sensitivity run.
    pub k_grid: Vec<usize>,
    pub world: WorldSpec,
    pub steps_per_student: usize,
    pub gradcheck: GradcheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            ingest: IngestConfig::default(),
            discretizer: DiscretizerSpec::default(),
            window_len: 100,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            folds: 5,
            fold: 0,
            k_grid: vec![0, 10, 30, 50, 100],
            world: WorldSpec::default(),
            steps_per_student: 200,
            gradcheck: GradcheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `resolved_config.json` into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join("resolved_config.json");
        fs::write(&path, self.to_json()? + "\n").map_err(|e| CoreError::io(&path, e))
    }
}
