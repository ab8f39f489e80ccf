use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters. Loaded from a flat `key = value` TOML file;
/// missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip: f64,
    pub min_count: u64,
    /// Sentences per minibatch.
    pub batch_size: usize,
    /// Coefficient on the mean supertag cross-entropy.
    pub tag_weight: f64,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: 2,
            hidden: 64,
            embed: 64,
            lr: 3e-3,
            epochs: 10,
            seed: 1,
            clip: 5.0,
            min_count: 1,
            batch_size: 16,
            tag_weight: 1.0,
            max_len: crate::corpus::DEFAULT_MAX_SENTENCE_LEN,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.layers == 0 || self.hidden == 0 || self.embed == 0 {
            return bad("layers, hidden and embed must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be a positive number");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.clip.is_finite() && self.clip >= 0.0) {
            return bad("clip must be a non-negative number");
        }
        if !(self.tag_weight.is_finite() && self.tag_weight >= 0.0) {
            return bad("tag_weight must be a non-negative number");
        }
        if self.max_len == 0 {
            return bad("max_len must be positive");
        }
        Ok(())
    }
}
