//! Scenario execution, theorem-precondition bookkeeping, scoring against the
//! oracle, and report emission.

mod config;
mod report;
mod run;
mod sweep;

pub use config::{
    solve_clique_size, Duration, GraphSource, LogMode, OutputSpec, ProtocolSpec, QuerySchedule, ScenarioConfig,
};
pub use report::{
    check_round_budget, emit_report, write_query_csv, BandwidthSummary, Checks, Formats, LevelTiming, PassRecord,
    QueryRecord, QueryStatus, RoundBudget, RunReport, TagSummary,
};
pub use run::{protocol_params, run_scenario};
pub use sweep::{replay, run_sweep, write_sweep_csv, ReplayOutcome, SweepGrid, SweepRow};

use thiserror::Error;

use crate::graph::GraphError;
use crate::oracle::OracleError;
use crate::protocol::ProtocolError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("round {round} (seed {seed}): {message}")]
    Runtime { round: u64, seed: u64, message: String },
    #[error("round {round} (seed {seed}): nodes disagree: {detail}")]
    Desync { round: u64, seed: u64, detail: String },
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
