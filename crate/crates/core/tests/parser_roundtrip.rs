mod common;

use common::roundtrip::check;
use proofloop_core::{
    classify_finding_line, parse_bug_report, parse_review_response, parse_solver_output,
    LineClass, SummaryVerdict, VerdictKind,
};
use proofloop_testkit::emitter::emitted_report;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn emitted_reports_round_trip(emitted in emitted_report()) {
        if let Err(e) = check(&emitted) {
            prop_assert!(false, "{e}\n---\n{}", emitted.text);
        }
    }

    #[test]
    fn parsers_are_total_and_keep_raw(text in "(?s).{0,400}") {
        let report = parse_bug_report(&text);
        prop_assert_eq!(&report.raw, &text);
        let solver = parse_solver_output(&text);
        prop_assert_eq!(&solver.raw, &text);
        if solver.summary_verdict != SummaryVerdict::Unparsed {
            prop_assert!(!solver.detailed_solution.trim().is_empty());
        }
        let _ = parse_review_response(&text);
        for line in text.lines() {
            let _ = classify_finding_line(line);
        }
    }

    #[test]
    fn label_soup_is_total(
        parts in prop::collection::vec(prop::sample::select(vec![
            "**Final Verdict:**", "Location:", "Issue:", "Critical Error", "Justification Gap",
            "\"", "\n", "  ", "*", "### Summary ###", "List of Findings", "Detailed Verification Log",
            "**2. Detailed Solution**", "Finding 3: KEEP MAJOR", "Finding 0: DELETE", "Verdict:",
        ]), 0..60)
    ) {
        let text = parts.concat();
        let report = parse_bug_report(&text);
        prop_assert_eq!(report.raw, text.clone());
        for a in parse_review_response(&text) {
            prop_assert!(a.finding_number >= 1);
        }
    }
}

#[test]
fn classify_examples() {
    assert_eq!(
        classify_finding_line("Issue: Critical Error - This step is a logical fallacy."),
        LineClass::CriticalError
    );
    assert_eq!(
        classify_finding_line("Issue: Justification Gap - The solution interchanges a limit and an integral"),
        LineClass::JustificationGap
    );
    assert_eq!(classify_finding_line("Issue: seems fine"), LineClass::Unknown);
    assert_eq!(classify_finding_line("**Issue:** **critical-error**: bad"), LineClass::CriticalError);
}

#[test]
fn degenerate_inputs() {
    let r = parse_bug_report(" \n\t \n");
    assert_eq!(r.verdict_kind, VerdictKind::Unparsed);
    assert!(r.findings.is_empty());
    assert_eq!(r.raw, " \n\t \n");
    let correct = parse_bug_report("**Final Verdict:** The solution is correct.");
    assert_eq!((correct.verdict_kind, correct.findings.len()), (VerdictKind::Correct, 0));
    let s = parse_solver_output("");
    assert_eq!(s.summary_verdict, SummaryVerdict::Unparsed);
    assert!(s.detailed_solution.is_empty() && s.method_sketch.is_empty());
}
