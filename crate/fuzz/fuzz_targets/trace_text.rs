#![no_main]
use dualmesh::hierarchy::PoolingTraceMap;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|input: (u8, &str)| {
    let coarse = input.0 as usize;
    if let Ok(t) = PoolingTraceMap::parse_text(input.1, coarse, "fuzz") {
        assert!(t.preimage_sizes().iter().all(|&s| s > 0));
        let again = PoolingTraceMap::parse_text(&t.to_text(), coarse, "fuzz").unwrap();
        assert_eq!(again.assignment(), t.assignment());
    }
});
