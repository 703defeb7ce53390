//! Runs the proof loop against a completion gateway.
//!
//! Every run owns an append-only event log. The run's state is a fold over
//! that log, so killing the process at any point and calling
//! [`Pipeline::resume`] continues the run with no step repeated or skipped.

pub mod config;
pub mod engine;
pub mod events;
pub mod log;
pub mod projection;
pub mod review;

pub use config::{BackendSettings, ConfigError, RunConfig};
pub use engine::{drive, BatchOutcome, Pipeline, PipelineError, RunOutcome};
pub use events::{EventPayload, LogHeader, RunEvent, TerminalKind, LOG_SCHEMA, LOG_VERSION};
pub use log::{validate_run_id, LogError, LogStore, RunLog};
pub use projection::{ApplyError, Projection, TerminalRecord, LIVELOCK_STREAK, PARSE_FAILURE_LIMIT};
pub use review::{
    decisions_from_answers, DecisionError, PendingReview, ReviewAction, ReviewDecision, Reviewer,
    SettableSeverity,
};
