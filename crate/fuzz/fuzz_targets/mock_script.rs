#![no_main]

use libfuzzer_sys::fuzz_target;
use proofloop_gateway::BackendScript;

fuzz_target!(|data: &str| {
    let dir = tempfile::tempdir().unwrap();
    let _ = BackendScript::from_toml(data, dir.path());
});
