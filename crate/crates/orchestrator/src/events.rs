//! Records written to a run's event log.

use chrono::{DateTime, Utc};
use proofloop_core::{
    BugReport, Decision, PipelineConfig, PolicyCounters, Problem, ReportOutcome, SolutionDraft,
    Step, TemplateName,
};
use proofloop_gateway::{BackendKind, StepKind, Usage};
use serde::{Deserialize, Serialize};

use crate::review::ReviewDecision;

pub const LOG_SCHEMA: &str = "proofloop/run-log";
pub const LOG_VERSION: u32 = 1;

/// First line of every log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub schema: String,
    pub version: u32,
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub problem: Problem,
    pub config: PipelineConfig,
}

impl LogHeader {
    pub fn new(run_id: impl Into<String>, problem: Problem, config: PipelineConfig) -> Self {
        Self {
            schema: LOG_SCHEMA.into(),
            version: LOG_VERSION,
            run_id: run_id.into(),
            created_at: Utc::now(),
            problem,
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    Accepted,
    Rejected,
    Aborted,
    Failed,
}

impl TerminalKind {
    pub fn of(step: Step) -> Option<Self> {
        match step {
            Step::Accepted => Some(TerminalKind::Accepted),
            Step::Rejected => Some(TerminalKind::Rejected),
            Step::Aborted => Some(TerminalKind::Aborted),
            Step::Failed => Some(TerminalKind::Failed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventPayload {
    StepEntered {
        step: Step,
        iteration: u32,
    },
    PromptSent {
        call: StepKind,
        ordinal: u32,
        request_id: String,
        template: TemplateName,
        prompt_sha256: String,
        prompt_chars: usize,
    },
    ResponseReceived {
        call: StepKind,
        ordinal: u32,
        text: String,
        usage: Usage,
        latency_ms: u64,
        backend: BackendKind,
        truncated: bool,
        retry_count: u32,
    },
    BackendFailed {
        call: StepKind,
        ordinal: u32,
        error: String,
    },
    ParseFailed {
        call: StepKind,
        ordinal: u32,
        reason: String,
    },
    DraftProduced {
        draft: SolutionDraft,
        #[serde(default)]
        truncated: bool,
    },
    ReportParsed {
        report: BugReport,
        outcome: ReportOutcome,
    },
    ReviewDecisionApplied {
        decision: ReviewDecision,
    },
    /// The report leaves review. With `timed_out` or a `fallback` reason the
    /// report goes on exactly as the verifier wrote it.
    ReviewReleased {
        timed_out: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fallback: Option<String>,
    },
    DecisionMade {
        decision: Decision,
        counters: PolicyCounters,
    },
    Terminal {
        terminal: TerminalKind,
        iterations: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::StepEntered { .. } => "step_entered",
            EventPayload::PromptSent { .. } => "prompt_sent",
            EventPayload::ResponseReceived { .. } => "response_received",
            EventPayload::BackendFailed { .. } => "backend_failed",
            EventPayload::ParseFailed { .. } => "parse_failed",
            EventPayload::DraftProduced { .. } => "draft_produced",
            EventPayload::ReportParsed { .. } => "report_parsed",
            EventPayload::ReviewDecisionApplied { .. } => "review_decision_applied",
            EventPayload::ReviewReleased { .. } => "review_released",
            EventPayload::DecisionMade { .. } => "decision_made",
            EventPayload::Terminal { .. } => "terminal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub run_id: String,
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub payload: EventPayload,
}
