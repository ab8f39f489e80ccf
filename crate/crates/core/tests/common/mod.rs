#![allow(dead_code)]

use std::path::Path;

use synsurp::model::TrainConfig;
use synsurp::pipeline::{write_toy_dataset, RunConfig, ToyDataConfig};

/// A toy dataset small enough to run every stage in seconds.
pub fn tiny_config(dir: &Path, seeds: &[u64]) -> RunConfig {
    let toy = ToyDataConfig {
        plain_sentences: 300,
        tagged_sentences: 150,
        dev_sentences: 20,
        items_per_construction: 6,
        fillers: 24,
        rare_fillers: 6,
        ..ToyDataConfig::default()
    };
    let path = write_toy_dataset(dir, &toy).unwrap();
    let mut cfg = RunConfig::load(&path).unwrap();
    cfg.seeds = seeds.to_vec();
    cfg.train = TrainConfig {
        layers: 1,
        hidden: 8,
        embed: 8,
        epochs: 2,
        ..TrainConfig::default()
    };
    cfg.analysis.n_resamples = 1000;
    let sim = cfg.simulate.as_mut().unwrap();
    sim.rt.participants = 12;
    cfg
}
