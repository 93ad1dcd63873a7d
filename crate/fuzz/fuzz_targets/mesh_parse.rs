#![no_main]

use libfuzzer_sys::fuzz_target;
use ronorm::mesh::TriMesh;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Parsing must never panic; a successfully parsed mesh must survive a
    // serialize/parse roundtrip with identical checksum.
    if let Ok(mesh) = TriMesh::parse(text) {
        let text2 = mesh.to_text();
        let back = TriMesh::parse(&text2).expect("canonical form reparses");
        assert_eq!(back.checksum(), mesh.checksum());
        assert_eq!(back.n_vertices(), mesh.n_vertices());
        let _ = ronorm::mesh::assemble_operators(&mesh);
    }
});
