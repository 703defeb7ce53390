#![no_main]

use std::collections::BTreeSet;

use libfuzzer_sys::fuzz_target;
use proofloop_core::parse_review_response;

fuzz_target!(|data: &str| {
    let answers = parse_review_response(data);
    let numbers: BTreeSet<usize> = answers.iter().map(|a| a.finding_number).collect();
    assert_eq!(numbers.len(), answers.len());
    assert!(answers.iter().all(|a| a.finding_number >= 1));
});
