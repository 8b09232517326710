#![no_main]

use libfuzzer_sys::fuzz_target;
use medihive::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    // Any config that parses must already satisfy the protocol's
    // validation rules.
    if let Ok(config) = parse_config(&text) {
        assert!(config.validate().is_ok());
        assert!(config.n >= 1);
        assert!(config.tau_agree > 0.5 && config.tau_agree <= 1.0);
    }
});
