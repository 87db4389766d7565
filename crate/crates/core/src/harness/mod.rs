//! Experiment orchestration: dataset manifests, the run pipeline, parameter
//! sweeps and synthetic multi-phase datasets.

mod dataset;
mod pipeline;
mod sweep;
mod synth;

pub use dataset::{load_dataset, Dataset, Manifest, Sample, Split};
pub use pipeline::{
    preprocess_sample, run_config, run_experiment, run_experiment_detailed, state_hash, write_report, AccuracySummary,
    MemberStats, Preprocessed, RepeatReport, RunArtifacts, RunReport, StageTimings,
};
pub use sweep::{sweep, summary_table, SweepAxis};
pub use synth::{generate, write_synthetic, SynthMode, SynthSpec};
