#![no_main]

use libfuzzer_sys::fuzz_target;
use proofloop_core::{parse_solver_output, SummaryVerdict};

fuzz_target!(|data: &str| {
    let out = parse_solver_output(data);
    assert_eq!(out.raw, data);
    if out.summary_verdict != SummaryVerdict::Unparsed {
        assert!(!out.detailed_solution.is_empty());
    }
});
