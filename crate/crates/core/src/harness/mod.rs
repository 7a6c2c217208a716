//! Experiment configs, seeded replicate runs, sweeps and CSV output.

mod builtin;
mod config;
mod expr;
mod output;
mod run;
mod sweep;

pub use builtin::{builtin, builtin_experiments, BUILTIN_NAMES};
pub use config::{parse_config, ExperimentConfig, Factor, GridEntry, Method, DEFAULT_SEEDS};
pub use expr::{format_matrix, parse_matrix};
pub use output::{write_outputs, DECOMPOSITION_CSV, METADATA_JSON, REGRET_CSV, SUMMARY_CSV};
pub use run::{
    median, quantile, run_experiment, DecompositionRow, DecompositionSummary, EpochEnd, ExperimentResult,
    MethodSummary, RunOptions, RunResult, SpikeReport, SPIKE_FACTOR, SPIKE_WINDOW, WHITENESS_START,
};
pub use sweep::{sweep, sweep_config, SweepParam};
