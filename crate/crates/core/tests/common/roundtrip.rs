//! Checks a generated report against what its generator says it contains.

use proofloop_core::{parse_bug_report, Classification, VerdictKind};
use proofloop_testkit::emitter::{EmittedReport, ExpectedClass, ExpectedVerdict};

/// Check one emitted report; returns a description of the first difference.
pub fn check(emitted: &EmittedReport) -> Result<(), String> {
    let parsed = parse_bug_report(&emitted.text);
    let want = match emitted.verdict {
        ExpectedVerdict::Correct => VerdictKind::Correct,
        ExpectedVerdict::Invalid => VerdictKind::Invalid,
        ExpectedVerdict::GapsOnly => VerdictKind::GapsOnly,
    };
    if parsed.verdict_kind != want {
        return Err(format!("verdict {:?}, want {want:?}", parsed.verdict_kind));
    }
    if parsed.findings.len() != emitted.findings.len() {
        return Err(format!("{} findings, want {}", parsed.findings.len(), emitted.findings.len()));
    }
    for (i, (got, want)) in parsed.findings.iter().zip(&emitted.findings).enumerate() {
        let class = match want.class {
            ExpectedClass::Critical => Classification::CriticalError,
            ExpectedClass::Gap => Classification::JustificationGap,
        };
        if got.classification != class || got.location_quote != want.quote || got.out_of_section {
            return Err(format!("finding {i}: {got:?}, want {want:?}"));
        }
    }
    if parsed.raw != emitted.text {
        return Err("raw text altered".into());
    }
    Ok(())
}
