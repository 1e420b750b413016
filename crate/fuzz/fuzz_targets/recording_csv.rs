#![no_main]

use libfuzzer_sys::fuzz_target;
use limbnet::dataset::{parse_recording_csv, ColumnMap};

fuzz_target!(|data: &[u8]| {
    let _ = parse_recording_csv(data, &ColumnMap::default());

    let semicolon = ColumnMap {
        delimiter: b';',
        ..ColumnMap::default()
    };
    let _ = parse_recording_csv(data, &semicolon);
});
