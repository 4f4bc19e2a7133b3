//! Experiment orchestration: configuration, training, sweeps, reports,
//! throughput measurement and plot data.

pub mod bench;
pub mod config;
pub mod experiment;
pub mod plotdata;
pub mod training;

pub use bench::{benchmark, ThroughputReport};
pub use config::{ExperimentConfig, ModelKind, Setting};
pub use experiment::{run_experiment, MetricsReport, SettingRow};
pub use training::{ingest_logs, train, PropagationReport, TrainSummary};
