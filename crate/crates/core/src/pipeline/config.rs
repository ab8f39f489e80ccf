use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::regression::Variant;
use crate::stats::DEFAULT_RESAMPLES;
use crate::toy::RtSimConfig;

pub const DEFAULT_SEEDS: [u64; 4] = [1, 2, 3, 4];

/// Input files. Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// Plain-text corpora, one sentence per line, for the next-word objective.
    #[serde(default)]
    pub lm_corpus: Vec<PathBuf>,
    /// `word<TAB>tag` training file.
    pub supertag_corpus: PathBuf,
    /// Held-out `word<TAB>tag` file for perplexity and tagging accuracy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_supertag: Option<PathBuf>,
    pub items: PathBuf,
    /// Human reading times. Mutually exclusive with `[simulate]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub n_resamples: usize,
    pub bootstrap_seed: u64,
    /// Share of OOV tokens in a scoring run above which a warning is logged.
    pub oov_warning_rate: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            n_resamples: DEFAULT_RESAMPLES,
            bootstrap_seed: 2024,
            oov_warning_rate: 0.05,
        }
    }
}

/// Synthetic reading times generated from the seed-averaged surprisals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub seed: u64,
    #[serde(flatten)]
    pub rt: RtSimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Candidate next words in the tag-prior sum; absent means the whole vocabulary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub out: PathBuf,
    pub data: DataPaths,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

impl RunConfig {
    /// Parse TOML, resolving relative paths against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        self.data.lm_corpus.iter_mut().for_each(fix);
        fix(&mut self.data.supertag_corpus);
        fix(&mut self.data.items);
        self.data.dev_supertag.as_mut().map(fix);
        self.data.rts.as_mut().map(fix);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return bad("seed list has duplicates".into());
        }
        if self.k == Some(0) {
            return bad("k must be positive".into());
        }
        if self.analysis.n_resamples < 1000 {
            return bad(format!("n_resamples must be at least 1000, got {}", self.analysis.n_resamples));
        }
        if !(0.0..=1.0).contains(&self.analysis.oov_warning_rate) {
            return bad("oov_warning_rate must lie in [0, 1]".into());
        }
        match (&self.data.rts, &self.simulate) {
            (Some(_), Some(_)) => return bad("data.rts and [simulate] are mutually exclusive".into()),
            (None, None) => return bad("either data.rts or a [simulate] section is required".into()),
            _ => {}
        }
        self.train.validate()
    }

    pub fn k_or_all(&self) -> usize {
        self.k.unwrap_or(usize::MAX)
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.out.clone(),
        }
    }

    /// Reading times used for fitting and analysis.
    pub fn rts_path(&self) -> PathBuf {
        match &self.data.rts {
            Some(p) => p.clone(),
            None => self.layout().simulated_rts(),
        }
    }
}

/// File naming under the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn frequencies(&self) -> PathBuf {
        self.root.join("frequencies.csv")
    }

    pub fn checkpoint(&self, seed: u64) -> PathBuf {
        self.root.join("checkpoints").join(format!("seed_{seed}.sslm"))
    }

    pub fn train_log(&self, seed: u64) -> PathBuf {
        self.root.join("logs").join(format!("train_seed_{seed}.csv"))
    }

    pub fn evaluation(&self, seed: u64) -> PathBuf {
        self.root.join("logs").join(format!("eval_seed_{seed}.json"))
    }

    pub fn surprisal(&self, seed: u64) -> PathBuf {
        self.root.join("surprisal").join(format!("seed_{seed}.csv"))
    }

    pub fn simulated_rts(&self) -> PathBuf {
        self.root.join("rts_simulated.csv")
    }

    pub fn fit(&self, variant: Variant, seed: u64) -> PathBuf {
        self.root
            .join("fits")
            .join(format!("{}_seed_{seed}.json", variant.as_str().to_lowercase()))
    }

    pub fn predictions(&self, variant: Variant, seed: u64) -> PathBuf {
        self.root
            .join("predictions")
            .join(format!("{}_seed_{seed}.csv", variant.as_str().to_lowercase()))
    }

    pub fn averaged_predictions(&self) -> PathBuf {
        self.root.join("predictions").join("averaged.csv")
    }

    pub fn analysis(&self, name: &str) -> PathBuf {
        self.root.join("analysis").join(name)
    }

    pub fn plot(&self, name: &str) -> PathBuf {
        self.root.join("analysis").join("plots").join(name)
    }
}
