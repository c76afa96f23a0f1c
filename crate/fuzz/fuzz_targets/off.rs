#![no_main]
use dualmesh::mesh::off::{encode_off, parse_off};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = parse_off(data) {
        let again = parse_off(&encode_off(&mesh)).expect("re-read of encoded mesh");
        assert_eq!(again.faces, mesh.faces);
    }
});
