#![no_main]

use libfuzzer_sys::fuzz_target;
use proofloop_core::{classify_report, is_major_fail, is_pass, parse_bug_report, VerdictKind};

fuzz_target!(|data: &str| {
    let report = parse_bug_report(data);
    assert_eq!(report.raw, data);
    // Reports without a readable verdict are refused, never judged.
    if report.verdict_kind == VerdictKind::Unparsed {
        assert!(is_pass(&report).is_err() && classify_report(&report).is_err());
        return;
    }
    let pass = is_pass(&report).unwrap();
    let major = is_major_fail(&report).unwrap();
    assert!(!(pass && major));
    classify_report(&report).unwrap();
});
