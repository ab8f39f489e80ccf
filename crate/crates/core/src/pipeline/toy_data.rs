use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{AnalysisConfig, DataPaths, RunConfig, SimulateConfig, DEFAULT_SEEDS};
use super::stages::write_config;
use crate::corpus::{format_supertag_tsv, write_items};
use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::toy::{generate_corpus, generate_items, GrammarConfig, RtSimConfig, Tagged};

/// Sizes of the generated toy dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyDataConfig {
    pub grammar: GrammarConfig,
    pub plain_sentences: usize,
    pub tagged_sentences: usize,
    pub dev_sentences: usize,
    pub items_per_construction: usize,
    pub fillers: usize,
    pub rare_fillers: usize,
    pub seed: u64,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        ToyDataConfig {
            grammar: GrammarConfig::default(),
            plain_sentences: 4000,
            tagged_sentences: 2000,
            dev_sentences: 300,
            items_per_construction: 24,
            fillers: 80,
            rare_fillers: 30,
            seed: 7,
        }
    }
}

/// Training settings sized for the toy grammar.
pub fn toy_train_config() -> TrainConfig {
    TrainConfig {
        hidden: 32,
        embed: 32,
        epochs: 8,
        ..TrainConfig::default()
    }
}

fn tsv(sentences: &[Tagged]) -> String {
    let pairs: Vec<(Vec<&str>, Vec<&str>)> = sentences
        .iter()
        .map(|s| s.iter().map(|(w, t)| (w.as_str(), *t)).unzip())
        .collect();
    format_supertag_tsv(&pairs)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write corpora, items and a ready-to-run `config.toml` into `dir`.
/// Returns the config path.
pub fn write_toy_dataset(dir: &Path, toy: &ToyDataConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let corpus = generate_corpus(&toy.grammar, toy.plain_sentences, toy.tagged_sentences, toy.seed)?;
    let dev = generate_corpus(&toy.grammar, 0, toy.dev_sentences, toy.seed.wrapping_add(1000))?;
    let items = generate_items(
        &toy.grammar,
        toy.items_per_construction,
        toy.fillers,
        toy.rare_fillers,
        toy.seed.wrapping_add(2000),
    )?;

    let mut lm = String::new();
    for s in &corpus.plain {
        lm.push_str(&s.join(" "));
        lm.push('\n');
    }
    write(&dir.join("lm.txt"), &lm)?;
    write(&dir.join("supertags.tsv"), &tsv(&corpus.tagged))?;
    write(&dir.join("dev.tsv"), &tsv(&dev.tagged))?;
    write_items(&dir.join("items.csv"), &items)?;

    let cfg = RunConfig {
        seeds: DEFAULT_SEEDS.to_vec(),
        k: None,
        out: "run".into(),
        data: DataPaths {
            lm_corpus: vec!["lm.txt".into()],
            supertag_corpus: "supertags.tsv".into(),
            dev_supertag: Some("dev.tsv".into()),
            items: "items.csv".into(),
            rts: None,
        },
        train: toy_train_config(),
        analysis: AnalysisConfig::default(),
        simulate: Some(SimulateConfig {
            seed: toy.seed.wrapping_add(3000),
            rt: RtSimConfig::default(),
        }),
    };
    let path = dir.join("config.toml");
    write_config(&path, &cfg)?;
    Ok(path)
}
