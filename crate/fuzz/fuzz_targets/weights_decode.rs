#![no_main]

use libfuzzer_sys::fuzz_target;
use limbnet::model::{decode_weights, encode_weights};

fuzz_target!(|data: &[u8]| {
    if let Ok(weights) = decode_weights(data) {
        // anything accepted must survive a re-encode
        let again = encode_weights(&weights);
        assert!(decode_weights(&again).is_ok());
    }
});
