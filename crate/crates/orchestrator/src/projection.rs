//! Run state rebuilt from the event log.
//!
//! [`Projection::apply`] is the only way state changes, both while a run is
//! live and when a log is replayed, so a replayed run is exactly the run that
//! wrote the log.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use proofloop_core::{
    advance, classify_report, decide_counters, BugReport, DraftOrigin, Event, PolicyError,
    ReviewMode, RunState, SolutionDraft, Step,
};
use proofloop_gateway::{StepKind, Usage};
use serde::Serialize;
use thiserror::Error;

use crate::events::{EventPayload, LogHeader, RunEvent, TerminalKind};
use crate::review::{DecisionError, PendingReview};

/// Corrections in a row that return the previous draft unchanged while the
/// verifier keeps filing the same report. Reaching this aborts the run.
pub const LIVELOCK_STREAK: u32 = 3;

/// Consecutive unparseable responses for one step before the run fails.
pub const PARSE_FAILURE_LIMIT: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApplyError {
    #[error("event belongs to run {found}, not {expected}")]
    WrongRun { expected: String, found: String },
    #[error("expected sequence number {expected}, found {found}")]
    Sequence { expected: u64, found: u64 },
    #[error("nothing may follow the terminal event")]
    AfterTerminal,
    #[error("{0}")]
    Policy(#[from] PolicyError),
    #[error("{0}")]
    Decision(#[from] DecisionError),
    #[error("inconsistent log: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PendingPrompt {
    pub call: StepKind,
    pub ordinal: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PendingResponse {
    pub call: StepKind,
    pub ordinal: u32,
    pub text: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalRecord {
    pub terminal: TerminalKind,
    pub iterations: u32,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    pub header: LogHeader,
    pub state: RunState,
    pub last_seq: u64,
    /// The current step has been announced with StepEntered.
    pub entered: bool,
    pub entered_at: Option<DateTime<Utc>>,
    /// Next ordinal per call kind: responses and failures already recorded.
    pub next_ordinal: BTreeMap<StepKind, u32>,
    pub pending_prompt: Option<PendingPrompt>,
    pub pending_response: Option<PendingResponse>,
    pub pending_review: Option<PendingReview>,
    /// Review could not run (backend failure); release the report unchanged.
    pub review_fallback: Option<String>,
    /// A report was scored and the policy decision is not yet recorded.
    pub awaiting_decision: bool,
    /// (call kind, consecutive unparseable responses).
    pub parse_failures: Option<(StepKind, u32)>,
    pub identical_corrections: u32,
    pub usage: Usage,
    pub truncated_responses: u32,
    pub terminal: Option<TerminalRecord>,
}

pub fn call_kind(step: Step) -> Option<StepKind> {
    match step {
        Step::Generate => Some(StepKind::Solve),
        Step::Improve => Some(StepKind::SelfImprove),
        Step::Verify => Some(StepKind::Verify),
        Step::Correct => Some(StepKind::Correct),
        Step::Review => Some(StepKind::Review),
        _ => None,
    }
}

pub fn draft_origin(step: Step) -> Option<DraftOrigin> {
    match step {
        Step::Generate => Some(DraftOrigin::Initial),
        Step::Improve => Some(DraftOrigin::SelfImprovement),
        Step::Correct => Some(DraftOrigin::Correction),
        _ => None,
    }
}

impl Projection {
    pub fn new(header: LogHeader) -> Self {
        Self {
            header,
            state: RunState::new(),
            last_seq: 0,
            entered: false,
            entered_at: None,
            next_ordinal: BTreeMap::new(),
            pending_prompt: None,
            pending_response: None,
            pending_review: None,
            review_fallback: None,
            awaiting_decision: false,
            parse_failures: None,
            identical_corrections: 0,
            usage: Usage::default(),
            truncated_responses: 0,
            terminal: None,
        }
    }

    pub fn run_id(&self) -> &str {
        &self.header.run_id
    }

    pub fn ordinal(&self, call: StepKind) -> u32 {
        self.next_ordinal.get(&call).copied().unwrap_or(0)
    }

    pub fn is_finished(&self) -> bool {
        self.terminal.is_some()
    }

    fn advance(&mut self, event: Event) -> Result<(), ApplyError> {
        let before = self.state.step;
        self.state = advance(&self.state, event, &self.header.config)?;
        self.entered = false;
        self.entered_at = None;
        if before == Step::Review || self.state.step.is_terminal() {
            self.pending_review = None;
        }
        Ok(())
    }

    /// Fold one event into the projection.
    pub fn apply(&mut self, event: &RunEvent) -> Result<(), ApplyError> {
        if event.run_id != self.header.run_id {
            return Err(ApplyError::WrongRun {
                expected: self.header.run_id.clone(),
                found: event.run_id.clone(),
            });
        }
        if event.seq != self.last_seq + 1 {
            return Err(ApplyError::Sequence {
                expected: self.last_seq + 1,
                found: event.seq,
            });
        }
        if self.terminal.is_some() {
            return Err(ApplyError::AfterTerminal);
        }
        let inconsistent = |msg: String| ApplyError::Inconsistent(msg);

        match &event.payload {
            EventPayload::StepEntered { step, iteration } => {
                if *step != self.state.step || *iteration != self.state.iteration() {
                    return Err(inconsistent(format!(
                        "entered {step:?} at iteration {iteration} while the run is in {:?} at {}",
                        self.state.step,
                        self.state.iteration()
                    )));
                }
                self.entered = true;
                self.entered_at = Some(event.timestamp);
                if *step == Step::Review && self.pending_review.is_none() {
                    let report = self
                        .state
                        .latest_report()
                        .cloned()
                        .ok_or_else(|| inconsistent("review entered with no report".into()))?;
                    self.pending_review = Some(PendingReview::new(self.state.report_history.len() - 1, report));
                }
            }
            EventPayload::PromptSent { call, ordinal, .. } => {
                if Some(*call) != call_kind(self.state.step) || *ordinal != self.ordinal(*call) {
                    return Err(inconsistent(format!("unexpected {call} prompt {ordinal}")));
                }
                self.pending_prompt = Some(PendingPrompt {
                    call: *call,
                    ordinal: *ordinal,
                });
            }
            EventPayload::ResponseReceived {
                call,
                ordinal,
                text,
                usage,
                truncated,
                ..
            } => {
                if self.pending_prompt != Some(PendingPrompt { call: *call, ordinal: *ordinal }) {
                    return Err(inconsistent(format!("response {call}/{ordinal} without its prompt")));
                }
                self.pending_prompt = None;
                *self.next_ordinal.entry(*call).or_default() += 1;
                self.pending_response = Some(PendingResponse {
                    call: *call,
                    ordinal: *ordinal,
                    text: text.clone(),
                    truncated: *truncated,
                });
                self.usage.prompt_tokens += usage.prompt_tokens;
                self.usage.output_tokens += usage.output_tokens;
                self.usage.thinking_tokens += usage.thinking_tokens;
                self.truncated_responses += u32::from(*truncated);
            }
            EventPayload::BackendFailed { call, ordinal, error } => {
                if self.pending_prompt != Some(PendingPrompt { call: *call, ordinal: *ordinal }) {
                    return Err(inconsistent(format!("failure {call}/{ordinal} without its prompt")));
                }
                self.pending_prompt = None;
                *self.next_ordinal.entry(*call).or_default() += 1;
                if self.state.step == Step::Review {
                    self.review_fallback = Some(error.clone());
                } else {
                    self.advance(Event::BackendFailure(error.clone()))?;
                }
            }
            EventPayload::ParseFailed { call, .. } => {
                let pending = self
                    .pending_response
                    .take()
                    .ok_or_else(|| inconsistent("parse failure with no response".into()))?;
                if pending.call != *call {
                    return Err(inconsistent(format!("parse failure for {call} on a {} response", pending.call)));
                }
                self.parse_failures = Some(match self.parse_failures {
                    Some((kind, n)) if kind == *call => (kind, n + 1),
                    _ => (*call, 1),
                });
            }
            EventPayload::DraftProduced { draft, .. } => {
                self.take_response(draft_origin(self.state.step).and_then(|_| call_kind(self.state.step)))?;
                self.note_correction(draft);
                self.parse_failures = None;
                self.advance(Event::DraftProduced(draft.clone()))?;
            }
            EventPayload::ReportParsed { report, outcome } => {
                self.take_response(Some(StepKind::Verify))?;
                if classify_report(report)? != *outcome {
                    return Err(inconsistent("recorded outcome does not match the report".into()));
                }
                self.parse_failures = None;
                self.advance(Event::ReportProduced(report.clone()))?;
                self.awaiting_decision = true;
            }
            EventPayload::ReviewDecisionApplied { decision } => {
                if self.state.step != Step::Review {
                    return Err(inconsistent("review decision outside review".into()));
                }
                // An auto review's answers are consumed by its decisions.
                if matches!(&self.pending_response, Some(p) if p.call == StepKind::Review) {
                    self.pending_response = None;
                }
                let run_id = self.header.run_id.clone();
                self.pending_review
                    .as_mut()
                    .ok_or_else(|| inconsistent("review decision before review began".into()))?
                    .apply(&run_id, std::slice::from_ref(decision))?;
            }
            EventPayload::ReviewReleased { timed_out, fallback } => {
                if self.state.step != Step::Review {
                    return Err(inconsistent("release outside review".into()));
                }
                if matches!(&self.pending_response, Some(p) if p.call == StepKind::Review) {
                    self.pending_response = None;
                }
                let pending = self
                    .pending_review
                    .take()
                    .ok_or_else(|| inconsistent("release before review began".into()))?;
                let forwarded = if *timed_out || fallback.is_some() {
                    pending.original
                } else {
                    pending.current
                };
                self.review_fallback = None;
                self.advance(Event::ReviewCompleted(forwarded))?;
                self.awaiting_decision = true;
            }
            EventPayload::DecisionMade { decision, counters } => {
                if !self.awaiting_decision {
                    return Err(inconsistent("decision with no new report".into()));
                }
                let expected = decide_counters(&self.state.counters, &self.header.config);
                if *decision != expected || *counters != self.state.counters {
                    return Err(inconsistent(format!(
                        "recorded {decision:?} with {counters:?}, replay gives {expected:?} with {:?}",
                        self.state.counters
                    )));
                }
                self.awaiting_decision = false;
            }
            EventPayload::Terminal {
                terminal,
                iterations,
                reason,
            } => {
                if !self.state.is_terminal() {
                    match terminal {
                        TerminalKind::Aborted => {
                            self.state = self.state.force_abort()?;
                        }
                        TerminalKind::Failed => {
                            self.advance(Event::BackendFailure(reason.clone().unwrap_or_default()))?;
                        }
                        other => {
                            return Err(inconsistent(format!("{other:?} recorded for a live run")));
                        }
                    }
                }
                if TerminalKind::of(self.state.step) != Some(*terminal) || *iterations != self.state.iteration() {
                    return Err(inconsistent(format!(
                        "terminal {terminal:?} at {iterations} disagrees with {:?} at {}",
                        self.state.step,
                        self.state.iteration()
                    )));
                }
                self.pending_prompt = None;
                self.pending_response = None;
                self.pending_review = None;
                self.terminal = Some(TerminalRecord {
                    terminal: *terminal,
                    iterations: *iterations,
                    reason: reason.clone(),
                });
            }
        }
        self.last_seq = event.seq;
        Ok(())
    }

    fn take_response(&mut self, expected: Option<StepKind>) -> Result<(), ApplyError> {
        match self.pending_response.take() {
            Some(p) if Some(p.call) == expected => Ok(()),
            other => Err(ApplyError::Inconsistent(format!(
                "result recorded without a matching response (have {:?}, step {:?})",
                other.map(|p| p.call),
                self.state.step
            ))),
        }
    }

    fn note_correction(&mut self, draft: &SolutionDraft) {
        if draft.produced_by != DraftOrigin::Correction {
            return;
        }
        let same_text = self.state.current_draft.as_ref().is_some_and(|d| d.body == draft.body);
        let reports = &self.state.report_history;
        let same_report = reports.len() >= 2
            && reports[reports.len() - 1].same_substance(&reports[reports.len() - 2]);
        if same_text && same_report {
            self.identical_corrections += 1;
        } else {
            self.identical_corrections = 0;
        }
    }

    /// True while a human reviewer is expected to act.
    pub fn awaiting_human(&self) -> bool {
        self.state.step == Step::Review
            && self.header.config.review_mode == ReviewMode::Human
            && self.entered
            && !self.is_finished()
    }

    pub fn reports(&self) -> &[BugReport] {
        &self.state.report_history
    }
}
