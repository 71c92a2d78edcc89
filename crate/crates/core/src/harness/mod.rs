//! Experiment runner: builds a problem, runs a list of solvers on several
//! noise realizations under a shared iteration budget, and writes the
//! histories and aggregate metrics.

mod config;
mod output;
mod run;

pub use config::{
    preset, ExperimentConfig, FlexibleKind, InitialGuess, ProblemSpec, SolverSpec, PRESETS,
};
pub use output::{
    emit_outputs, history_csv, history_file_name, read_history_csv, report_markdown, CsvRow,
    FailedRun, Summary, CSV_HEADER,
};
pub use run::{
    run_experiment, run_solver, ExperimentReport, RunMetrics, RunResult, SolverAggregate,
};

pub use crate::history::relative_error;
