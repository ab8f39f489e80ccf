//! End-to-end runs: train, score, simulate, fit-predict, analyze.

mod config;
mod stages;
mod toy_data;

pub use config::{AnalysisConfig, DataPaths, Layout, RunConfig, SimulateConfig, DEFAULT_SEEDS};
pub use stages::{
    cmd_all, cmd_analyze, cmd_fit_predict, cmd_score, cmd_simulate, cmd_train, write_config, AnalysisOutcome,
    Evaluation, FitPredictOutcome, TrainOutcome, CONTRAST_REGIONS,
};
pub use toy_data::{toy_train_config, write_toy_dataset, ToyDataConfig};
