#![no_main]

use feshbach::io::{instance_spec_to_json, parse_instance_spec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_instance_spec(text, "instance.json") {
        let back = parse_instance_spec(&instance_spec_to_json(&spec), "instance.json").expect("written spec parses");
        assert_eq!(back, spec);
        let _ = spec.validate();
    }
});
