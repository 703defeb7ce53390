//! Core of the proof pipeline: domain types, the run state machine and its
//! acceptance policy, prompt templates, model-output parsers, and the
//! reliability model for the policy.
//!
//! Nothing in this crate performs I/O.

pub mod parser;
pub mod policy;
pub mod prompts;
pub mod reliability;
pub mod types;

pub use parser::{
    classify_finding_line, parse_bug_report, parse_review_response, parse_solver_output,
    LineClass, ReviewAnswer, SolverOutput,
};
pub use policy::{
    advance, classify_report, decide, decide_counters, is_major_fail, is_pass, Decision, Event,
    PolicyCounters, PolicyError, ReportOutcome, RunState, Step,
};
pub use prompts::{PromptError, PromptKit, PromptTemplate, Provenance, RenderedPrompt, TemplateName};
pub use reliability::{
    false_accept_closed_form, simulate_policy, PolicyReliability, ReliabilityError,
    SolutionTruth, VerifierErrorModel,
};
pub use types::{
    BugReport, Classification, DraftOrigin, Finding, PipelineConfig, Problem, ReviewMode,
    ReviewStatus, Severity, SolutionDraft, SummaryVerdict, ValidationError, VerdictKind,
};
