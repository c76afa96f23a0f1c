#![no_main]
use dualmesh::pipeline::io::{format_labels, format_logits, parse_labels, parse_logits};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(l) = parse_logits(text, "fuzz") {
        assert!(l.iter().all(|v| v.is_finite()));
        assert_eq!(parse_logits(&format_logits(&l), "fuzz").unwrap(), l);
    }
    if let Ok(l) = parse_labels(text, "fuzz") {
        assert_eq!(parse_labels(&format_labels(&l), "fuzz").unwrap(), l);
    }
});
