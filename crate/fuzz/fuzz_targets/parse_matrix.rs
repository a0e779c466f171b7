#![no_main]

use feshbach::io::{matrix_to_json, parse_matrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_matrix(text, "H.json") {
        let back = parse_matrix(&matrix_to_json(&m), "H.json").expect("written matrix parses");
        assert_eq!(back, m);
    }
});
