//! Experiment orchestration: configuration, seeded runs and CSV traces.

pub mod config;
pub mod run;
pub mod trace;

pub use config::{summary_path_for, Candidate, DatasetConfig, ExperimentConfig, SolverConfig, SEED_ENV};
pub use run::{
    load_data, run_experiment, run_experiment_on, run_seed, write_outputs, ExperimentResult,
    PreparedData, RunOptions, SeedOutcome,
};
pub use trace::{read_trace, summarize, write_summary, write_trace, SummaryRow, TraceRow};
