//! Configuration, experiment orchestration, metrics and artifact I/O.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod io;
pub mod metrics;

pub use config::{ExperimentConfig, Task};
pub use experiment::{
    apply_axis, build_problem, run_ablation, run_experiment, AblationAxis, AblationTable, Problem, RunOutput,
};
pub use metrics::{psnr, MetricsRecord, Timing};
