//! The run state machine and its acceptance policy.
//!
//! A run moves Generate → Improve → Verify, then cycles through
//! Verify → (Review) → Correct → Verify until the policy accepts after
//! `pass_threshold` consecutive passing verifications, rejects after
//! `rejection_window` consecutive major-issue verifications, or aborts at
//! `max_total_iterations`. A passing verification that does not yet accept
//! loops straight back to Verify on the same draft.
//!
//! Everything here is pure: no I/O, no clocks, no model calls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    BugReport, Classification, DraftOrigin, PipelineConfig, ReviewMode, Severity, SolutionDraft,
    VerdictKind,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("illegal transition: event {event} is not accepted in step {step:?}")]
    IllegalTransition { step: Step, event: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Generate,
    Improve,
    Verify,
    Review,
    Correct,
    Accepted,
    Rejected,
    Aborted,
    Failed,
}

impl Step {
    pub const ALL: [Step; 9] = [
        Step::Generate,
        Step::Improve,
        Step::Verify,
        Step::Review,
        Step::Correct,
        Step::Accepted,
        Step::Rejected,
        Step::Aborted,
        Step::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            Step::Accepted | Step::Rejected | Step::Aborted | Step::Failed
        )
    }
}

/// How a single verification counts toward the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportOutcome {
    Pass,
    MinorFail,
    MajorFail,
}

fn require_parsed(report: &BugReport) -> Result<(), PolicyError> {
    if report.verdict_kind == VerdictKind::Unparsed {
        return Err(PolicyError::ContractViolation(
            "cannot judge a report whose verdict was not parsed".into(),
        ));
    }
    Ok(())
}

/// A verification passes when the verdict declares the solution correct and no
/// surviving finding is a critical error or a major gap.
pub fn is_pass(report: &BugReport) -> Result<bool, PolicyError> {
    require_parsed(report)?;
    Ok(report.verdict_kind == VerdictKind::Correct
        && report.active_findings().all(|(_, f)| {
            f.classification != Classification::CriticalError
                && f.effective_severity() != Severity::Major
        }))
}

/// True when a surviving finding is a critical error or a major gap.
pub fn is_major_fail(report: &BugReport) -> Result<bool, PolicyError> {
    require_parsed(report)?;
    Ok(report.active_findings().any(|(_, f)| match f.classification {
        Classification::CriticalError => true,
        Classification::JustificationGap => f.effective_severity() == Severity::Major,
    }))
}

pub fn classify_report(report: &BugReport) -> Result<ReportOutcome, PolicyError> {
    if is_pass(report)? {
        Ok(ReportOutcome::Pass)
    } else if is_major_fail(report)? {
        Ok(ReportOutcome::MajorFail)
    } else {
        Ok(ReportOutcome::MinorFail)
    }
}

/// The counters the acceptance policy reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyCounters {
    /// Completed verifications.
    pub iteration: u32,
    pub consecutive_passes: u32,
    pub consecutive_major_fails: u32,
}

impl PolicyCounters {
    /// Count one more verification. Each streak only survives reports of its
    /// own kind, so a minor fail breaks both.
    pub fn record(self, outcome: ReportOutcome) -> Self {
        let iteration = self.iteration + 1;
        match outcome {
            ReportOutcome::Pass => Self {
                iteration,
                consecutive_passes: self.consecutive_passes + 1,
                consecutive_major_fails: 0,
            },
            ReportOutcome::MajorFail => Self {
                iteration,
                consecutive_passes: 0,
                consecutive_major_fails: self.consecutive_major_fails + 1,
            },
            ReportOutcome::MinorFail => Self {
                iteration,
                consecutive_passes: 0,
                consecutive_major_fails: 0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
    Continue,
    Abort,
}

pub fn decide_counters(counters: &PolicyCounters, config: &PipelineConfig) -> Decision {
    if counters.consecutive_passes >= config.pass_threshold {
        Decision::Accept
    } else if counters.consecutive_major_fails >= config.rejection_window {
        Decision::Reject
    } else if counters.iteration >= config.max_total_iterations {
        Decision::Abort
    } else {
        Decision::Continue
    }
}

/// Decide what follows a verification whose counters are already recorded.
pub fn decide(state: &RunState, config: &PipelineConfig) -> Result<Decision, PolicyError> {
    if state.step.is_terminal() {
        return Err(PolicyError::ContractViolation(format!(
            "decide called on terminal step {:?}",
            state.step
        )));
    }
    Ok(decide_counters(&state.counters, config))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", content = "data", rename_all = "snake_case")]
pub enum Event {
    DraftProduced(SolutionDraft),
    ReportProduced(BugReport),
    ReviewCompleted(BugReport),
    BackendFailure(String),
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::DraftProduced(_) => "DraftProduced",
            Event::ReportProduced(_) => "ReportProduced",
            Event::ReviewCompleted(_) => "ReviewCompleted",
            Event::BackendFailure(_) => "BackendFailure",
        }
    }
}

/// One run's position in the state machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunState {
    pub step: Step,
    pub counters: PolicyCounters,
    /// Counters as they stood before the latest report; review re-scores
    /// that report from here.
    pub counters_before_report: PolicyCounters,
    pub current_draft: Option<SolutionDraft>,
    pub report_history: Vec<BugReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Default for RunState {
    fn default() -> Self {
        Self::new()
    }
}

impl RunState {
    pub fn new() -> Self {
        Self {
            step: Step::Generate,
            counters: PolicyCounters::default(),
            counters_before_report: PolicyCounters::default(),
            current_draft: None,
            report_history: Vec::new(),
            failure: None,
        }
    }

    pub fn iteration(&self) -> u32 {
        self.counters.iteration
    }

    pub fn consecutive_passes(&self) -> u32 {
        self.counters.consecutive_passes
    }

    pub fn consecutive_major_fails(&self) -> u32 {
        self.counters.consecutive_major_fails
    }

    pub fn is_terminal(&self) -> bool {
        self.step.is_terminal()
    }

    pub fn latest_report(&self) -> Option<&BugReport> {
        self.report_history.last()
    }

    pub fn next_draft_version(&self) -> u32 {
        self.current_draft.as_ref().map_or(0, |d| d.version + 1)
    }

    /// Stop a live run without a policy decision (livelock guard, operator stop).
    pub fn force_abort(&self) -> Result<RunState, PolicyError> {
        if self.is_terminal() {
            return Err(PolicyError::IllegalTransition {
                step: self.step,
                event: "Abort",
            });
        }
        let mut next = self.clone();
        next.step = Step::Aborted;
        Ok(next)
    }
}

fn expected_origin(step: Step) -> Option<DraftOrigin> {
    match step {
        Step::Generate => Some(DraftOrigin::Initial),
        Step::Improve => Some(DraftOrigin::SelfImprovement),
        Step::Correct => Some(DraftOrigin::Correction),
        _ => None,
    }
}

fn route(decision: Decision, outcome: ReportOutcome, on_fail: Step) -> Step {
    match decision {
        Decision::Accept => Step::Accepted,
        Decision::Reject => Step::Rejected,
        Decision::Abort => Step::Aborted,
        Decision::Continue if outcome == ReportOutcome::Pass => Step::Verify,
        Decision::Continue => on_fail,
    }
}

/// Apply one event and return the successor state.
pub fn advance(
    state: &RunState,
    event: Event,
    config: &PipelineConfig,
) -> Result<RunState, PolicyError> {
    let illegal = |event: &Event| PolicyError::IllegalTransition {
        step: state.step,
        event: event.name(),
    };
    if state.is_terminal() {
        return Err(illegal(&event));
    }

    let mut next = state.clone();
    match (state.step, event) {
        (_, Event::BackendFailure(reason)) => {
            next.step = Step::Failed;
            next.failure = Some(reason);
        }
        (step @ (Step::Generate | Step::Improve | Step::Correct), Event::DraftProduced(draft)) => {
            if Some(draft.produced_by) != expected_origin(step) {
                return Err(PolicyError::ContractViolation(format!(
                    "draft produced by {:?} delivered in step {step:?}",
                    draft.produced_by
                )));
            }
            if draft.version < state.next_draft_version() {
                return Err(PolicyError::ContractViolation(format!(
                    "draft version {} does not exceed current version",
                    draft.version
                )));
            }
            draft
                .validate()
                .map_err(|e| PolicyError::ContractViolation(e.to_string()))?;
            next.current_draft = Some(draft);
            next.step = match step {
                Step::Generate => Step::Improve,
                _ => Step::Verify,
            };
        }
        (Step::Verify, Event::ReportProduced(report)) => {
            let outcome = classify_report(&report)?;
            next.counters_before_report = state.counters;
            next.counters = state.counters.record(outcome);
            next.report_history.push(report);
            let on_fail = match config.review_mode {
                ReviewMode::Skip => Step::Correct,
                ReviewMode::Human | ReviewMode::Auto => Step::Review,
            };
            next.step = route(decide_counters(&next.counters, config), outcome, on_fail);
        }
        (Step::Review, Event::ReviewCompleted(report)) => {
            let pending = state.report_history.last().ok_or_else(|| {
                PolicyError::ContractViolation("review completed with no report on file".into())
            })?;
            if pending.raw != report.raw || !pending.same_substance(&report) {
                return Err(PolicyError::ContractViolation(
                    "reviewed report does not match the report under review".into(),
                ));
            }
            let outcome = classify_report(&report)?;
            next.counters = state.counters_before_report.record(outcome);
            *next.report_history.last_mut().expect("checked above") = report;
            next.step = route(decide_counters(&next.counters, config), outcome, Step::Correct);
        }
        (_, event) => return Err(illegal(&event)),
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Finding, ReviewStatus, SummaryVerdict};

    pub(crate) fn report(kind: VerdictKind, findings: Vec<Finding>) -> BugReport {
        BugReport {
            verdict_sentence: format!("{kind:?}"),
            verdict_kind: kind,
            findings,
            raw: format!("raw {kind:?}"),
        }
    }

    fn gap(severity: Severity) -> Finding {
        Finding {
            severity,
            ..Finding::new("q", Classification::JustificationGap, "e")
        }
    }

    fn critical() -> Finding {
        Finding::new("it follows that $A-C > B-D$", Classification::CriticalError, "fallacy")
    }

    fn draft(version: u32, origin: DraftOrigin) -> SolutionDraft {
        SolutionDraft {
            version,
            body: format!("draft {version}"),
            summary_verdict: SummaryVerdict::Complete,
            produced_by: origin,
        }
    }

    #[test]
    fn pass_examples() {
        assert!(is_pass(&report(VerdictKind::Correct, vec![])).unwrap());
        assert!(!is_pass(&report(VerdictKind::Invalid, vec![critical()])).unwrap());
        let mut deleted = gap(Severity::Unrated);
        deleted.review_status = ReviewStatus::Deleted;
        assert!(is_pass(&report(VerdictKind::Correct, vec![deleted])).unwrap());
        assert!(is_pass(&report(VerdictKind::Correct, vec![gap(Severity::Minor)])).unwrap());
        assert!(!is_pass(&report(VerdictKind::Correct, vec![gap(Severity::Unrated)])).unwrap());
    }

    #[test]
    fn major_fail_examples() {
        assert!(is_major_fail(&report(VerdictKind::Invalid, vec![critical()])).unwrap());
        assert!(!is_major_fail(&report(
            VerdictKind::GapsOnly,
            vec![gap(Severity::Minor), gap(Severity::Minor)]
        ))
        .unwrap());
        assert!(!is_major_fail(&report(VerdictKind::Invalid, vec![])).unwrap());
        assert!(is_major_fail(&report(VerdictKind::GapsOnly, vec![gap(Severity::Unrated)])).unwrap());
    }

    #[test]
    fn unparsed_reports_are_contract_violations() {
        let r = report(VerdictKind::Unparsed, vec![]);
        assert!(matches!(is_pass(&r), Err(PolicyError::ContractViolation(_))));
        assert!(matches!(is_major_fail(&r), Err(PolicyError::ContractViolation(_))));
    }

    #[test]
    fn decide_examples() {
        let config = PipelineConfig::default();
        let mut s = RunState::new();
        s.step = Step::Verify;
        s.counters = PolicyCounters { iteration: 5, consecutive_passes: 5, consecutive_major_fails: 0 };
        assert_eq!(decide(&s, &config).unwrap(), Decision::Accept);
        s.counters = PolicyCounters { iteration: 10, consecutive_passes: 0, consecutive_major_fails: 10 };
        assert_eq!(decide(&s, &config).unwrap(), Decision::Reject);
        s.counters = PolicyCounters { iteration: 30, consecutive_passes: 1, consecutive_major_fails: 0 };
        assert_eq!(decide(&s, &config).unwrap(), Decision::Abort);
        s.step = Step::Accepted;
        assert!(decide(&s, &config).is_err());
    }

    #[test]
    fn four_passes_then_a_failure_resets() {
        let config = PipelineConfig { review_mode: ReviewMode::Skip, ..Default::default() };
        let mut s = RunState::new();
        s = advance(&s, Event::DraftProduced(draft(0, DraftOrigin::Initial)), &config).unwrap();
        assert_eq!(s.step, Step::Improve);
        s = advance(&s, Event::DraftProduced(draft(1, DraftOrigin::SelfImprovement)), &config).unwrap();
        assert_eq!(s.step, Step::Verify);
        for _ in 0..4 {
            s = advance(&s, Event::ReportProduced(report(VerdictKind::Correct, vec![])), &config).unwrap();
            assert_eq!(s.step, Step::Verify);
        }
        assert_eq!(s.consecutive_passes(), 4);
        s = advance(&s, Event::ReportProduced(report(VerdictKind::Invalid, vec![critical()])), &config).unwrap();
        assert_eq!(s.step, Step::Correct);
        assert_eq!(s.consecutive_passes(), 0);
        assert_eq!(s.consecutive_major_fails(), 1);
        assert_eq!(decide(&s, &config).unwrap(), Decision::Continue);
    }

    #[test]
    fn fifth_pass_accepts() {
        let config = PipelineConfig::default();
        let mut s = RunState::new();
        s.step = Step::Verify;
        s.counters = PolicyCounters { iteration: 4, consecutive_passes: 4, consecutive_major_fails: 0 };
        let s = advance(&s, Event::ReportProduced(report(VerdictKind::Correct, vec![])), &config).unwrap();
        assert_eq!(s.step, Step::Accepted);
        assert_eq!(s.iteration(), 5);
    }

    #[test]
    fn failure_routes_through_review_unless_skipped() {
        let mut s = RunState::new();
        s.step = Step::Verify;
        s.current_draft = Some(draft(1, DraftOrigin::SelfImprovement));
        let fail = report(VerdictKind::Invalid, vec![critical()]);
        let skip = PipelineConfig { review_mode: ReviewMode::Skip, ..Default::default() };
        let auto = PipelineConfig::default();
        assert_eq!(advance(&s, Event::ReportProduced(fail.clone()), &skip).unwrap().step, Step::Correct);
        let reviewed = advance(&s, Event::ReportProduced(fail.clone()), &auto).unwrap();
        assert_eq!(reviewed.step, Step::Review);
        let done = advance(&reviewed, Event::ReviewCompleted(fail), &auto).unwrap();
        assert_eq!(done.step, Step::Correct);
    }

    #[test]
    fn review_that_deletes_everything_recounts_as_pass() {
        let config = PipelineConfig::default();
        let mut s = RunState::new();
        s.step = Step::Verify;
        s.counters = PolicyCounters { iteration: 2, consecutive_passes: 2, consecutive_major_fails: 0 };
        let flagged = report(VerdictKind::Correct, vec![gap(Severity::Unrated)]);
        let s = advance(&s, Event::ReportProduced(flagged.clone()), &config).unwrap();
        assert_eq!(s.step, Step::Review);
        assert_eq!(s.consecutive_major_fails(), 1);
        let mut cleared = flagged;
        cleared.findings[0].review_status = ReviewStatus::Deleted;
        let s = advance(&s, Event::ReviewCompleted(cleared), &config).unwrap();
        assert_eq!(s.step, Step::Verify);
        assert_eq!(s.counters, PolicyCounters { iteration: 3, consecutive_passes: 3, consecutive_major_fails: 0 });
    }

    #[test]
    fn review_cannot_swap_the_report() {
        let config = PipelineConfig::default();
        let mut s = RunState::new();
        s.step = Step::Verify;
        let s = advance(&s, Event::ReportProduced(report(VerdictKind::Invalid, vec![critical()])), &config).unwrap();
        let other = report(VerdictKind::Correct, vec![]);
        assert!(matches!(
            advance(&s, Event::ReviewCompleted(other), &config),
            Err(PolicyError::ContractViolation(_))
        ));
    }

    #[test]
    fn illegal_pairs_name_step_and_event() {
        let config = PipelineConfig::default();
        let s = RunState::new();
        let err = advance(&s, Event::ReportProduced(report(VerdictKind::Correct, vec![])), &config)
            .unwrap_err();
        assert_eq!(err, PolicyError::IllegalTransition { step: Step::Generate, event: "ReportProduced" });
        assert!(err.to_string().contains("Generate") && err.to_string().contains("ReportProduced"));
    }

    #[test]
    fn versions_must_increase_and_origin_must_match() {
        let config = PipelineConfig::default();
        let s = advance(&RunState::new(), Event::DraftProduced(draft(3, DraftOrigin::Initial)), &config).unwrap();
        assert!(advance(&s, Event::DraftProduced(draft(3, DraftOrigin::SelfImprovement)), &config).is_err());
        assert!(advance(&s, Event::DraftProduced(draft(4, DraftOrigin::Correction)), &config).is_err());
        assert!(advance(&s, Event::DraftProduced(draft(4, DraftOrigin::SelfImprovement)), &config).is_ok());
    }

    #[test]
    fn backend_failure_fails_any_live_step() {
        let config = PipelineConfig::default();
        for step in Step::ALL.into_iter().filter(|s| !s.is_terminal()) {
            let mut s = RunState::new();
            s.step = step;
            let next = advance(&s, Event::BackendFailure("down".into()), &config).unwrap();
            assert_eq!(next.step, Step::Failed);
            assert_eq!(next.failure.as_deref(), Some("down"));
        }
    }
}
