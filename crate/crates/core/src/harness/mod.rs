//! Experiment configuration, orchestration, metric files and verification suites.

mod config;
mod output;
mod run;
mod verify;

pub use config::{
    parse_override, AlgorithmConfig, DataConfig, ExperimentConfig, FederationConfig, Method, ProblemConfig, RunConfig,
};
pub use output::{
    emit_csv, median, parse_csv, read_csv, summarize, summarize_gaps, write_csv, write_jsonl, MetricsRow, RunRecord,
    Summary, CSV_HEADER,
};
pub use run::{
    median_final_gap, output_dir, prepare, run_experiment, run_prepared, run_seed, sweep, write_outputs,
    ExperimentResult, Prepared, SeedRun, SweepEntry, SweepReport, ALPHA_GRID, GAMMA_GRID, OUTPUT_DIR_ENV,
};
pub use verify::{verify_suite, Check, Suite, VerifyReport, PROBABILITY_DELTAS};
