//! Review decisions on a bug report and the rules for applying them.

use chrono::{DateTime, Utc};
use proofloop_core::{BugReport, Classification, ReviewAnswer, ReviewStatus, Severity};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettableSeverity {
    Major,
    Minor,
}

impl From<SettableSeverity> for Severity {
    fn from(s: SettableSeverity) -> Self {
        match s {
            SettableSeverity::Major => Severity::Major,
            SettableSeverity::Minor => Severity::Minor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReviewAction {
    Confirm,
    Delete,
    SetSeverity { severity: SettableSeverity },
}

impl ReviewAction {
    /// Confirm and Delete settle a finding; each finding takes at most one.
    pub fn is_terminal(self) -> bool {
        matches!(self, ReviewAction::Confirm | ReviewAction::Delete)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reviewer {
    Human { id: String },
    Auto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub run_id: String,
    /// Position of the report in the run's report history.
    pub report_index: usize,
    pub finding_index: usize,
    pub action: ReviewAction,
    pub reviewer: Reviewer,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecisionError {
    #[error("decision {position}: belongs to run {found}, not {expected}")]
    WrongRun {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("decision {position}: report {found} is not the report under review ({expected})")]
    StaleReport {
        position: usize,
        expected: usize,
        found: usize,
    },
    #[error("decision {position}: the report has no finding {finding_index}")]
    NoSuchFinding { position: usize, finding_index: usize },
    #[error("decision {position}: finding {finding_index} is already {status:?}")]
    AlreadySettled {
        position: usize,
        finding_index: usize,
        status: ReviewStatus,
    },
    #[error("decision {position}: finding {finding_index} was deleted; its severity cannot change")]
    SeverityOnDeleted { position: usize, finding_index: usize },
    #[error("decision {position}: finding {finding_index} is a critical error; only gaps carry a severity")]
    SeverityOnCritical { position: usize, finding_index: usize },
}

/// The report under review, as the verifier wrote it and as decided so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReview {
    pub report_index: usize,
    pub original: BugReport,
    pub current: BugReport,
    pub decisions: Vec<ReviewDecision>,
}

impl PendingReview {
    pub fn new(report_index: usize, report: BugReport) -> Self {
        Self {
            report_index,
            original: report.clone(),
            current: report,
            decisions: Vec::new(),
        }
    }

    /// Apply a batch all-or-nothing. On error nothing changes.
    pub fn apply(&mut self, run_id: &str, batch: &[ReviewDecision]) -> Result<(), DecisionError> {
        let mut report = self.current.clone();
        for (position, d) in batch.iter().enumerate() {
            if d.run_id != run_id {
                return Err(DecisionError::WrongRun {
                    position,
                    expected: run_id.into(),
                    found: d.run_id.clone(),
                });
            }
            if d.report_index != self.report_index {
                return Err(DecisionError::StaleReport {
                    position,
                    expected: self.report_index,
                    found: d.report_index,
                });
            }
            let finding_index = d.finding_index;
            let finding = report
                .findings
                .get_mut(finding_index)
                .ok_or(DecisionError::NoSuchFinding { position, finding_index })?;
            match d.action {
                ReviewAction::Confirm | ReviewAction::Delete => {
                    if finding.review_status != ReviewStatus::Unreviewed {
                        return Err(DecisionError::AlreadySettled {
                            position,
                            finding_index,
                            status: finding.review_status,
                        });
                    }
                    finding.review_status = if d.action == ReviewAction::Delete {
                        ReviewStatus::Deleted
                    } else {
                        ReviewStatus::Confirmed
                    };
                }
                ReviewAction::SetSeverity { severity } => {
                    if finding.is_deleted() {
                        return Err(DecisionError::SeverityOnDeleted { position, finding_index });
                    }
                    if finding.classification == Classification::CriticalError {
                        return Err(DecisionError::SeverityOnCritical { position, finding_index });
                    }
                    finding.severity = severity.into();
                }
            }
        }
        self.current = report;
        self.decisions.extend_from_slice(batch);
        Ok(())
    }
}

/// Turn auto-review answers into decisions. Answers that would be refused
/// (unknown finding, already settled, severity on a critical error) are
/// dropped rather than failing the whole review.
pub fn decisions_from_answers(
    run_id: &str,
    review: &PendingReview,
    answers: &[ReviewAnswer],
    timestamp: DateTime<Utc>,
) -> Vec<ReviewDecision> {
    let mut scratch = review.clone();
    let mut accepted = Vec::new();
    for answer in answers {
        let Some(finding_index) = answer.finding_number.checked_sub(1) else {
            continue;
        };
        let make = |action| ReviewDecision {
            run_id: run_id.into(),
            report_index: review.report_index,
            finding_index,
            action,
            reviewer: Reviewer::Auto,
            timestamp,
        };
        let mut batch = vec![make(if answer.keep {
            ReviewAction::Confirm
        } else {
            ReviewAction::Delete
        })];
        let is_gap = scratch
            .current
            .findings
            .get(finding_index)
            .is_some_and(|f| f.classification == Classification::JustificationGap);
        if answer.keep && is_gap {
            let severity = match answer.severity {
                Some(Severity::Minor) => SettableSeverity::Minor,
                _ => SettableSeverity::Major,
            };
            batch.push(make(ReviewAction::SetSeverity { severity }));
        }
        if scratch.apply(run_id, &batch).is_ok() {
            accepted.extend(batch);
        }
    }
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use proofloop_core::{Finding, VerdictKind};

    fn report() -> BugReport {
        BugReport {
            verdict_sentence: "invalid".into(),
            verdict_kind: VerdictKind::Invalid,
            findings: vec![
                Finding::new("a", Classification::JustificationGap, "gap"),
                Finding::new("b", Classification::CriticalError, "error"),
            ],
            raw: "raw".into(),
        }
    }

    fn decision(finding_index: usize, action: ReviewAction) -> ReviewDecision {
        ReviewDecision {
            run_id: "r".into(),
            report_index: 3,
            finding_index,
            action,
            reviewer: Reviewer::Human { id: "ana".into() },
            timestamp: DateTime::UNIX_EPOCH,
        }
    }

    #[test]
    fn batches_apply_atomically() {
        let mut p = PendingReview::new(3, report());
        let before = p.clone();
        let bad = [decision(0, ReviewAction::Delete), decision(5, ReviewAction::Confirm)];
        assert_eq!(
            p.apply("r", &bad),
            Err(DecisionError::NoSuchFinding { position: 1, finding_index: 5 })
        );
        assert_eq!(p, before);
        p.apply("r", &[decision(1, ReviewAction::Delete)]).unwrap();
        assert!(p.current.findings[1].is_deleted());
        assert_eq!(p.original, report());
    }

    #[test]
    fn one_terminal_action_per_finding() {
        let mut p = PendingReview::new(3, report());
        let twice = [decision(0, ReviewAction::Confirm), decision(0, ReviewAction::Delete)];
        assert!(matches!(p.apply("r", &twice), Err(DecisionError::AlreadySettled { position: 1, .. })));
        let severity = ReviewAction::SetSeverity { severity: SettableSeverity::Minor };
        p.apply("r", &[decision(0, ReviewAction::Confirm), decision(0, severity)]).unwrap();
        assert_eq!(p.current.findings[0].severity, Severity::Minor);
        assert!(matches!(
            p.apply("r", &[decision(1, severity)]),
            Err(DecisionError::SeverityOnCritical { .. })
        ));
        p.apply("r", &[decision(1, ReviewAction::Delete)]).unwrap();
        assert!(matches!(
            p.apply("r", &[decision(1, severity)]),
            Err(DecisionError::SeverityOnDeleted { .. })
        ));
    }

    #[test]
    fn stale_or_foreign_decisions_refused() {
        let mut p = PendingReview::new(3, report());
        let mut stale = decision(0, ReviewAction::Delete);
        stale.report_index = 2;
        assert!(matches!(p.apply("r", &[stale]), Err(DecisionError::StaleReport { .. })));
        assert!(matches!(
            p.apply("other", &[decision(0, ReviewAction::Delete)]),
            Err(DecisionError::WrongRun { .. })
        ));
        p.apply("r", &[]).unwrap();
        assert_eq!(p.current, report());
    }

    #[test]
    fn answers_map_to_decisions() {
        let p = PendingReview::new(3, report());
        let answers = [
            ReviewAnswer { finding_number: 1, keep: true, severity: Some(Severity::Minor) },
            ReviewAnswer { finding_number: 2, keep: false, severity: None },
            ReviewAnswer { finding_number: 9, keep: false, severity: None },
        ];
        let ds = decisions_from_answers("r", &p, &answers, DateTime::UNIX_EPOCH);
        let actions: Vec<_> = ds.iter().map(|d| (d.finding_index, d.action)).collect();
        assert_eq!(
            actions,
            vec![
                (0, ReviewAction::Confirm),
                (0, ReviewAction::SetSeverity { severity: SettableSeverity::Minor }),
                (1, ReviewAction::Delete),
            ]
        );
        assert!(ds.iter().all(|d| d.reviewer == Reviewer::Auto));
    }
}
