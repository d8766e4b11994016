//! The run-configuration parser must return `Ok`/`Err` on any input, never
//! panic, and accepted configs must survive re-validation and re-parsing.

#![no_main]

use convexify::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::parse(text) {
        assert!(cfg.validate().is_ok(), "parsed config fails re-validation");
        // hashing walks every field; it must be total on accepted configs
        let _ = cfg.config_hash();
        let _ = cfg.canonical_string();
    }
});
