//! Demand-response and synthetic experiments: configuration, the round loop,
//! and CSV traces.

pub mod config;
pub mod runner;
pub mod trace;

pub use config::{ExperimentConfig, GateChoice, ResolvedConfig, Scenario, StepperChoice};
pub use runner::{
    algorithm_roster, run_experiment, AlgorithmKind, AlgorithmRun, AlgorithmSpec, AlgorithmSummary, BoundReport,
    Checks, ExperimentRun, GateEvent, GateLabel, RoundRecord, Summary,
};
pub use trace::{csv_string, emit_csv, header, write_csv, PER_ALGORITHM_COLUMNS};
