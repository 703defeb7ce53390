//! Drives the state machine with synthetic verdicts. Shared by the policy
//! suites here and the acceptance target.

#![allow(dead_code)]

pub mod roundtrip;

use proofloop_core::{
    advance, BugReport, Classification, DraftOrigin, Event, Finding, PipelineConfig, ReviewMode,
    RunState, Severity, SolutionDraft, Step, SummaryVerdict, VerdictKind,
};
use proofloop_testkit::{Terminal, Verdict};

pub fn report_for(verdict: Verdict, tag: usize) -> BugReport {
    let (kind, findings) = match verdict {
        Verdict::Pass => (VerdictKind::Correct, vec![]),
        Verdict::MinorFail => {
            let mut gap = Finding::new(format!("gap {tag}"), Classification::JustificationGap, "minor");
            gap.severity = Severity::Minor;
            (VerdictKind::GapsOnly, vec![gap])
        }
        Verdict::MajorFail => (
            VerdictKind::Invalid,
            vec![Finding::new(format!("step {tag}"), Classification::CriticalError, "wrong")],
        ),
    };
    BugReport {
        verdict_sentence: format!("{kind:?}"),
        verdict_kind: kind,
        findings,
        raw: format!("report {tag}"),
    }
}

pub fn draft(version: u32, origin: DraftOrigin) -> SolutionDraft {
    SolutionDraft {
        version,
        body: format!("draft {version}"),
        summary_verdict: SummaryVerdict::Complete,
        produced_by: origin,
    }
}

pub fn config(mode: ReviewMode) -> PipelineConfig {
    PipelineConfig {
        review_mode: mode,
        ..PipelineConfig::default()
    }
}

/// State after generation and self-improvement, ready to verify.
pub fn ready(config: &PipelineConfig) -> RunState {
    let s = advance(&RunState::new(), Event::DraftProduced(draft(0, DraftOrigin::Initial)), config).unwrap();
    advance(&s, Event::DraftProduced(draft(1, DraftOrigin::SelfImprovement)), config).unwrap()
}

/// Feed one verdict: the report, an identity review if the run stops for
/// one, and a correction draft if the run asks for one.
pub fn feed(state: &RunState, verdict: Verdict, tag: usize, config: &PipelineConfig) -> RunState {
    assert_eq!(state.step, Step::Verify, "feed expects a run waiting on verification");
    let report = report_for(verdict, tag);
    let mut s = advance(state, Event::ReportProduced(report.clone()), config).unwrap();
    if s.step == Step::Review {
        s = advance(&s, Event::ReviewCompleted(report), config).unwrap();
    }
    if s.step == Step::Correct {
        let version = s.next_draft_version();
        s = advance(&s, Event::DraftProduced(draft(version, DraftOrigin::Correction)), config).unwrap();
    }
    s
}

pub fn terminal_of(state: &RunState) -> Option<(Terminal, usize)> {
    let t = match state.step {
        Step::Accepted => Terminal::Accept,
        Step::Rejected => Terminal::Reject,
        Step::Aborted => Terminal::Abort,
        _ => return None,
    };
    Some((t, state.iteration() as usize))
}

/// Run a whole verdict sequence, stopping at the first terminal.
pub fn drive(seq: &[Verdict], config: &PipelineConfig) -> Option<(Terminal, usize)> {
    let mut s = ready(config);
    for (i, &v) in seq.iter().enumerate() {
        s = feed(&s, v, i, config);
        if let Some(t) = terminal_of(&s) {
            return Some(t);
        }
    }
    None
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Equivalence {
    /// Sequences of exactly the walked length whose outcome was compared.
    pub sequences: u64,
    /// Of those, how many disagreed with the reference.
    pub mismatches: u64,
    /// Shorter prefixes compared on the way (the run is still live or has
    /// just stopped).
    pub prefixes: u64,
    pub prefix_mismatches: u64,
}

/// Compare the state machine with the reference on every verdict sequence of
/// `len` verdicts. The walk is depth-first and shares each prefix's state.
/// Once a run stops, further verdicts cannot move it (terminal states refuse
/// every event), so every extension of that prefix takes the prefix's outcome
/// and is compared with the reference on the full sequence.
pub fn equivalence(config: &PipelineConfig, len: usize) -> Equivalence {
    let limits = (
        config.pass_threshold as usize,
        config.rejection_window as usize,
        config.max_total_iterations as usize,
    );
    let mut tally = Equivalence::default();
    let mut prefix = Vec::with_capacity(len);
    walk(&ready(config), &mut prefix, len, config, limits, &mut tally);
    tally
}

fn walk(
    state: &RunState,
    prefix: &mut Vec<Verdict>,
    len: usize,
    config: &PipelineConfig,
    (k, m, cap): (usize, usize, usize),
    tally: &mut Equivalence,
) {
    for v in Verdict::ALL {
        prefix.push(v);
        let next = feed(state, v, prefix.len(), config);
        let got = terminal_of(&next);
        tally.prefixes += 1;
        if got != proofloop_testkit::reference_policy(prefix, k, m, cap) {
            tally.prefix_mismatches += 1;
        }
        if got.is_none() && prefix.len() < len {
            walk(&next, prefix, len, config, (k, m, cap), tally);
        } else {
            let remaining = len - prefix.len();
            for tail in proofloop_testkit::all_sequences(remaining) {
                let full: Vec<Verdict> = prefix.iter().copied().chain(tail).collect();
                tally.sequences += 1;
                if got != proofloop_testkit::reference_policy(&full, k, m, cap) {
                    tally.mismatches += 1;
                }
            }
        }
        prefix.pop();
    }
}
