#![no_main]

use libfuzzer_sys::fuzz_target;
use orality_core::persist::from_json;

fuzz_target!(|data: &[u8]| {
    if let Ok(doc) = from_json(data) {
        assert!(doc.problems().is_empty());
    }
});
