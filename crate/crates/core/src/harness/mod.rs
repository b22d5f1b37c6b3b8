//! Experiment configuration, datasets and report files.

pub mod config;
pub mod dataset;
pub mod run;
pub mod synth;

pub use config::ExperimentConfig;
pub use dataset::{load_dataset, read_meta, write_dataset, Dataset, FeatureNorm, Meta};
pub use run::{
    default_grid, lambda_sweep, lambda_sweep_on, run_experiment, run_on, ExperimentSummary, SweepSummary,
    METRICS_HEADER,
};
pub use synth::{synth_graph, SynthConfig};
