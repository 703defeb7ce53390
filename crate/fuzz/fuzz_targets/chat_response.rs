#![no_main]

use libfuzzer_sys::fuzz_target;
use proofloop_gateway::decode_response;

fuzz_target!(|data: &str| {
    if let Ok(decoded) = decode_response(data, "prompt") {
        assert!(data.contains("choices"));
        let _ = decoded.usage;
    }
});
