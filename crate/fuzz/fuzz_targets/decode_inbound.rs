#![no_main]

use libfuzzer_sys::fuzz_target;
use orality_core::protocol::{decode_inbound, encode_inbound};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(event) = decode_inbound(s) {
            let again = decode_inbound(&encode_inbound(&event)).expect("re-encoded event decodes");
            assert_eq!(again, event);
        }
    }
});
