#![no_main]

use cld_core::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        let canonical = cfg.to_text();
        let again = RunConfig::parse(&canonical).expect("canonical text must parse");
        assert_eq!(again.to_text(), canonical);
    }
});
