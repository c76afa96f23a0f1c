#![no_main]
use dualmesh::hierarchy::HierarchyManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = serde_json::from_slice::<HierarchyManifest>(data) {
        let _ = m.config.validate();
        let text = serde_json::to_string(&m).unwrap();
        let again: HierarchyManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(again.levels, m.levels);
    }
});
