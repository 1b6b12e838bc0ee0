#![no_main]

use libfuzzer_sys::fuzz_target;
use orality_core::stimulation::parse_questions_response;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let expected = usize::from(n % 4);
    if let Ok(s) = std::str::from_utf8(rest) {
        if let Ok(qs) = parse_questions_response(s, expected) {
            assert_eq!(qs.len(), expected);
        }
    }
});
