#![no_main]

use chaoscomm::cli::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for strict in [false, true] {
        if let Ok(cfg) = parse_config(text, strict) {
            assert!(cfg.params.m_subcarriers >= 2);
            assert!(cfg.params.spreading_factor >= 1);
            cfg.validate().expect("parsed configs are valid");
        }
    }
});
