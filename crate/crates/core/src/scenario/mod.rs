//! Scenario configuration, deterministic end-to-end execution and
//! metrics emission.

mod artifacts;
mod config;
mod run;
pub mod sky;

pub use artifacts::{
    arx_rows_to_csv, summarize_dir, throughput_to_csv, write_artifacts, ArtifactError,
    ARX_PVT_CSV, EVENTS_CSV, SUMMARY_JSON, THROUGHPUT_CSV, VICTIM_TRACE_CSV,
};
pub use config::{
    AssignmentEntry, AttackParams, ConfigError, DelayCmdEntry, Mode, NodeTopology, PrnSelector,
    ScenarioConfig, SimParams, Timeline, VictimParams, Waypoint,
};
pub use run::{run, run_with_options, ArxRow, PhaseSummary, RunError, RunOptions, RunResult, RunSummary, Wire};

/// The shipped reference scenario (message level, paper timeline).
pub fn reference_config_toml() -> String {
    include_str!("../../../../configs/paper_replay.toml").to_string()
}

/// The shipped signal-level reference scenario (1 MS/s narrowband).
pub fn reference_signal_config_toml() -> String {
    include_str!("../../../../configs/paper_replay_signal.toml").to_string()
}
