#![no_main]

use libfuzzer_sys::fuzz_target;
use limbnet::config::{parse_config, RunConfig};

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = parse_config(data) {
        let mut config = RunConfig::default();
        let _ = config.apply(&entries);
    }
});
