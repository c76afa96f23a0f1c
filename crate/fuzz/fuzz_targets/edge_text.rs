#![no_main]
use dualmesh::neighborhoods::EdgeSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|input: (u8, &str)| {
    let n = input.0 as usize;
    if let Ok(edges) = EdgeSet::parse_text(input.1, n, "fuzz") {
        edges.check(n).expect("parsed edges are in range");
        let again = EdgeSet::parse_text(&edges.to_text(), n, "fuzz").unwrap();
        assert_eq!(again, edges);
    }
});
