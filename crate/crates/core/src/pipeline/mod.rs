//! The four experiment stages (sample, score, train, evaluate) plus noise
//! re-evaluation and synthetic-corpus export, driven by an
//! [`ExperimentConfig`] and persisted in a [`ResultsStore`](crate::store::ResultsStore).

mod commands;
mod config;

pub use commands::{
    arch_seed, synth, Experiment, StageSummary, TrainSubset, NOISE_REPORT_CSV, RANDOM_SEARCH_CSV, REPORT_CSV, REPORT_JSON,
    RUNS_CSV, SCORES_CSV,
};
pub use config::{DataConfig, EvaluateConfig, ExperimentConfig, NoiseConfig, Seeds, TrainSettings};
