#![no_main]

use libfuzzer_sys::fuzz_target;
use ronorm::container::parse_dataset_header;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(header) = parse_dataset_header(text) {
        // accepted headers must imply well-defined tensor extents
        let (ax, at) = header.a_extent();
        let (ux, ut) = header.u_extent();
        assert!(ax >= 1 && at >= 1 && ux >= 1 && ut >= 1);
    }
});
