//! The single serializable record of every knob a run depends on.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_SNR_GRID;
use crate::error::{io_err, Result};
use crate::localize::LocalizeConfig;
use crate::metrics::DEFAULT_THRESHOLD;
use crate::model::{Dims, Variant};
use crate::signal::FeatureConfig;
use crate::train::TrainConfig;

/// Copied into manifests, checkpoints and reports so any artifact names the
/// settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub snr_grid: Vec<f64>,
    /// Clean/noisy decision threshold on the score scale.
    pub threshold: f64,
    pub localize: LocalizeConfig,
    pub seed: u64,
    #[serde(default)]
    pub paths: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            snr_grid: DEFAULT_SNR_GRID.to_vec(),
            threshold: DEFAULT_THRESHOLD,
            localize: LocalizeConfig::default(),
            seed: 0,
            paths: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    /// Settings for the reduced model on synthetic data: log-compressed
    /// magnitudes and a learning-rate schedule that still moves the weights
    /// within a few dozen epochs.
    pub fn desk(variant: Variant, seed: u64) -> Self {
        Self {
            features: FeatureConfig {
                log_compress: true,
                ..FeatureConfig::default()
            },
            train: TrainConfig {
                variant,
                dims: Dims::REDUCED,
                epochs: 15,
                initial_lr: 2e-3,
                lr_decay: 0.95,
                seed,
                ..TrainConfig::default()
            },
            seed,
            ..Self::default()
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.geometry()?;
        self.train.validate()?;
        self.localize.validate()
    }
}
