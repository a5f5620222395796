//! Config-driven experiment pipeline and its artifacts.

pub mod config;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use config::{Domain, ExperimentConfig};
pub use pipeline::{run_pipeline, Condition, ConditionResult, ExperimentReport, SeedRun};
pub use report::emit_report;
