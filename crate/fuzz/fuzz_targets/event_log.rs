#![no_main]

use libfuzzer_sys::fuzz_target;
use proofloop_orchestrator::LogStore;

// Arbitrary bytes as a stored run log: loading either fails cleanly or yields
// a log that loads the same way a second time.
fuzz_target!(|data: &[u8]| {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("fuzz.jsonl"), data).unwrap();
    let Ok(log) = LogStore::open(dir.path()).unwrap().get("fuzz") else {
        return;
    };
    let first = log.events();
    let again = LogStore::open(dir.path()).unwrap().get("fuzz").expect("a loaded log reloads");
    assert_eq!(first, again.events());
});
