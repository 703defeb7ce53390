//! Domain values shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rejected input to a constructor or validator.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {field}: {reason}")]
pub struct ValidationError {
    pub field: &'static str,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

/// A problem statement plus an optional strategy hint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

impl Problem {
    pub fn new(id: impl Into<String>, statement: impl Into<String>) -> Result<Self, ValidationError> {
        let problem = Self {
            id: id.into(),
            statement: statement.into(),
            hint: None,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_hint(mut self, hint: impl Into<String>) -> Self {
        let hint = hint.into();
        self.hint = if hint.trim().is_empty() { None } else { Some(hint) };
        self
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.id.trim().is_empty() {
            return Err(ValidationError::new("problem.id", "must not be empty"));
        }
        if self.statement.trim().is_empty() {
            return Err(ValidationError::new("problem.statement", "must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryVerdict {
    Complete,
    Partial,
    Unparsed,
}

/// Which pipeline step wrote a draft.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftOrigin {
    Initial,
    SelfImprovement,
    Correction,
}

/// One version of the candidate solution.
///
/// `body` holds the detailed solution only; this is the text that is sent to
/// the verifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionDraft {
    pub version: u32,
    pub body: String,
    pub summary_verdict: SummaryVerdict,
    pub produced_by: DraftOrigin,
}

impl SolutionDraft {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.summary_verdict != SummaryVerdict::Unparsed && self.body.trim().is_empty() {
            return Err(ValidationError::new(
                "draft.body",
                "must not be empty for a parsed draft",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    CriticalError,
    JustificationGap,
}

impl Classification {
    pub fn label(self) -> &'static str {
        match self {
            Classification::CriticalError => "Critical Error",
            Classification::JustificationGap => "Justification Gap",
        }
    }
}

/// Severity is assigned at review time. The verifier never rates findings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Major,
    Minor,
    Unrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Unreviewed,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub location_quote: String,
    pub classification: Classification,
    pub severity: Severity,
    pub explanation: String,
    pub review_status: ReviewStatus,
    /// Set when the finding was picked up outside the report's findings list.
    #[serde(default)]
    pub out_of_section: bool,
}

impl Finding {
    pub fn new(
        location_quote: impl Into<String>,
        classification: Classification,
        explanation: impl Into<String>,
    ) -> Self {
        Self {
            location_quote: location_quote.into(),
            classification,
            severity: Severity::Unrated,
            explanation: explanation.into(),
            review_status: ReviewStatus::Unreviewed,
            out_of_section: false,
        }
    }

    pub fn is_deleted(&self) -> bool {
        self.review_status == ReviewStatus::Deleted
    }

    /// Severity used by the pass/fail predicates. Unrated gaps count as major.
    pub fn effective_severity(&self) -> Severity {
        match self.severity {
            Severity::Unrated => Severity::Major,
            s => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Correct,
    Invalid,
    GapsOnly,
    Unparsed,
}

/// A verifier's report: the verdict sentence plus classified findings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub verdict_sentence: String,
    pub verdict_kind: VerdictKind,
    pub findings: Vec<Finding>,
    /// Model output exactly as received.
    pub raw: String,
}

impl BugReport {
    pub fn active_findings(&self) -> impl Iterator<Item = (usize, &Finding)> {
        self.findings
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_deleted())
    }

    /// Compare the parts of two reports that matter to the policy, ignoring
    /// raw text and review state.
    pub fn same_substance(&self, other: &BugReport) -> bool {
        self.verdict_kind == other.verdict_kind
            && self.findings.len() == other.findings.len()
            && self
                .findings
                .iter()
                .zip(&other.findings)
                .all(|(a, b)| {
                    a.location_quote == b.location_quote && a.classification == b.classification
                })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewMode {
    Human,
    Auto,
    Skip,
}

impl std::str::FromStr for ReviewMode {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "human" => Ok(ReviewMode::Human),
            "auto" => Ok(ReviewMode::Auto),
            "skip" => Ok(ReviewMode::Skip),
            other => Err(ValidationError::new(
                "review_mode",
                format!("expected human, auto or skip, got {other:?}"),
            )),
        }
    }
}

pub const DEFAULT_PASS_THRESHOLD: u32 = 5;
pub const DEFAULT_REJECTION_WINDOW: u32 = 10;
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_THINKING_BUDGET: u32 = 32_768;
pub const DEFAULT_MAX_TOTAL_ITERATIONS: u32 = 30;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 65_536;
pub const DEFAULT_HUMAN_REVIEW_TIMEOUT_SECS: u64 = 24 * 60 * 60;

/// Every tunable of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Consecutive passing verifications required to accept.
    pub pass_threshold: u32,
    /// Consecutive major-issue verifications that reject.
    pub rejection_window: u32,
    pub temperature: f64,
    pub thinking_budget: u32,
    pub max_output_tokens: u32,
    pub parallel_runs: u32,
    pub review_mode: ReviewMode,
    /// Hard cap on verification iterations; reaching it aborts the run.
    pub max_total_iterations: u32,
    /// How long a run blocked in human review waits before skipping it.
    pub review_timeout_secs: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pass_threshold: DEFAULT_PASS_THRESHOLD,
            rejection_window: DEFAULT_REJECTION_WINDOW,
            temperature: DEFAULT_TEMPERATURE,
            thinking_budget: DEFAULT_THINKING_BUDGET,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            parallel_runs: 1,
            review_mode: ReviewMode::Auto,
            max_total_iterations: DEFAULT_MAX_TOTAL_ITERATIONS,
            review_timeout_secs: DEFAULT_HUMAN_REVIEW_TIMEOUT_SECS,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.pass_threshold == 0 {
            return Err(ValidationError::new("pass_threshold", "must be at least 1"));
        }
        if self.rejection_window == 0 {
            return Err(ValidationError::new("rejection_window", "must be at least 1"));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ValidationError::new(
                "temperature",
                format!("must lie in [0, 2], got {}", self.temperature),
            ));
        }
        if self.thinking_budget == 0 {
            return Err(ValidationError::new("thinking_budget", "must be positive"));
        }
        if self.max_output_tokens == 0 {
            return Err(ValidationError::new("max_output_tokens", "must be positive"));
        }
        if self.parallel_runs == 0 {
            return Err(ValidationError::new("parallel_runs", "must be at least 1"));
        }
        let floor = self.pass_threshold.max(self.rejection_window);
        if self.max_total_iterations < floor {
            return Err(ValidationError::new(
                "max_total_iterations",
                format!("must be at least max(pass_threshold, rejection_window) = {floor}"),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_published_parameters() {
        let c = PipelineConfig::default();
        assert_eq!(c.pass_threshold, 5);
        assert_eq!(c.rejection_window, 10);
        assert_eq!(c.temperature, 0.1);
        assert_eq!(c.thinking_budget, 32768);
        assert_eq!(c.max_total_iterations, 30);
        assert_eq!(c.parallel_runs, 1);
        assert_eq!(c.review_mode, ReviewMode::Auto);
        c.validate().unwrap();
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let bad = [
            PipelineConfig { pass_threshold: 0, ..Default::default() },
            PipelineConfig { rejection_window: 0, ..Default::default() },
            PipelineConfig { temperature: 2.5, ..Default::default() },
            PipelineConfig { temperature: f64::NAN, ..Default::default() },
            PipelineConfig { parallel_runs: 0, ..Default::default() },
            PipelineConfig { max_total_iterations: 9, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn problem_requires_statement() {
        assert!(Problem::new("p1", "  ").is_err());
        assert!(Problem::new("", "x").is_err());
        let p = Problem::new("p1", "Show that 1 < 2.").unwrap().with_hint("");
        assert_eq!(p.hint, None);
    }

    #[test]
    fn unrated_counts_as_major() {
        let f = Finding::new("q", Classification::JustificationGap, "e");
        assert_eq!(f.effective_severity(), Severity::Major);
    }
}
