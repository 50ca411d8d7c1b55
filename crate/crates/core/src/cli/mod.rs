//! Experiment runner: configuration, training replications, sweeps, theory
//! reports and weight re-analysis.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind, DATA_ROOT_VAR};
pub use report::{cmd_theory, theory_report, ReportEntry, TheoryReport};
pub use run::{
    cmd_detect, cmd_mnist_prep, cmd_sweep, cmd_train, load_splits, select_best, GridPoint, RunRecord, Splits,
    SweepReport, TrainReport,
};
