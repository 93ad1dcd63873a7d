#![no_main]

use libfuzzer_sys::fuzz_target;
use ronorm::spectral::EigenBasis;

fuzz_target!(|data: &[u8]| {
    if let Ok((basis, _checksum)) = EigenBasis::from_bytes(data) {
        // anything the reader accepts must satisfy the basis invariants
        assert!(basis.k() <= basis.n_points() || basis.k() > 0);
        assert!(basis.values.iter().all(|v| v.is_finite()));
        assert!(basis.weights.iter().all(|w| *w > 0.0));
    }
});
