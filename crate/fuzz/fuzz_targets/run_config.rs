#![no_main]

use libfuzzer_sys::fuzz_target;
use proofloop_orchestrator::RunConfig;

fuzz_target!(|data: &str| {
    if let Ok(config) = RunConfig::from_toml(data) {
        config.pipeline.validate().unwrap();
        let _ = config.backend.rate_limit();
        let _ = config.backend.retry();
    }
});
