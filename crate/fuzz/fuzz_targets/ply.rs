#![no_main]
use dualmesh::mesh::ply::{encode_ply, parse_ply, PlyEncoding};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(mesh) = parse_ply(data) else { return };
    // Anything accepted must survive a write and a second read.
    for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
        let again = parse_ply(&encode_ply(&mesh, enc)).expect("re-read of encoded mesh");
        assert_eq!(again.positions.len(), mesh.positions.len());
        assert_eq!(again.faces, mesh.faces);
    }
});
