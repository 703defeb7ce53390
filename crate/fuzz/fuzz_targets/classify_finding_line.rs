#![no_main]

use libfuzzer_sys::fuzz_target;
use proofloop_core::classify_finding_line;

fuzz_target!(|data: &str| {
    for line in data.lines() {
        classify_finding_line(line);
    }
});
