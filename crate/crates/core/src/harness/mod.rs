//! Experiment harness: configuration, runs, sweeps, comparisons and audits.

pub mod audit;
pub mod compare;
pub mod config;
pub mod record;
pub mod runner;
pub mod sweep;

pub use compare::{compare, Comparison, Metric};
pub use config::{AlgorithmConfig, BuiltProblem, ExperimentConfig, RecordSchedule};
pub use record::{RunRecord, SeriesPoint};
pub use runner::{reference_optimum, run_built, run_experiment, RunOptions};
pub use sweep::{run_sweep, SweepResult, SweepSummary};
