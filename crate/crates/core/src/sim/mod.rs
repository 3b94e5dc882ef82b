//! Deterministic virtual-clock harness: sensor file formats, scenarios,
//! run configuration, the replay loop and reports.

pub mod config;
pub mod fixtures;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod wav;

pub use config::{ConfigError, SimConfig};
pub use report::{bench_report, bench_runs, summarize, PhaseSummary};
pub use runner::{
    run_scenario, simulate, DispatchRecord, ExpectationOutcome, RunOutcome, RunStats, SimError,
    Transcript,
};
pub use scenario::{
    load_scenario, parse_scenario, EventKind, Scenario, ScenarioError, ScenarioEvent,
};
pub use wav::{read_wav, write_wav, WavError};
