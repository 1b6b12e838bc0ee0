#![no_main]

use libfuzzer_sys::fuzz_target;
use orality_core::extraction::{parse_extraction_response, MAX_ENTITIES_PER_GROUP};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(result) = parse_extraction_response(s) {
            for g in &result.groups {
                assert!((1..=MAX_ENTITIES_PER_GROUP).contains(&g.entities.len()));
            }
        }
    }
});
