//! Config-driven experiment runner: training runs, metrics logs,
//! comparisons, correlation reports and charts.

pub mod compare;
pub mod config;
pub mod metrics;
pub mod plot;
pub mod report;
pub mod train;

pub use compare::{compare, grid, Comparison, Grid};
pub use config::{ExperimentConfig, Method, ModelConfig};
pub use metrics::{read_metrics, EpochMetrics};
pub use plot::emit_plots;
pub use report::{correlation_report, pearson, CorrelationReport};
pub use train::{run_experiment, run_on_dataset, write_run, RunArtifact, RunSummary};
