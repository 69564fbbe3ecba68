#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use portopt::pipeline::{validate_config, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(text, Path::new("base")) {
        for v in validate_config(&cfg) {
            assert!(!v.field.is_empty());
        }
    }
});
