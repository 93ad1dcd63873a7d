#![no_main]

use libfuzzer_sys::fuzz_target;
use ronorm::reduction::WeightField;

fuzz_target!(|data: &[u8]| {
    if let Ok(wf) = WeightField::from_bytes(data) {
        assert!(wf.data().iter().all(|v| v.is_finite()));
        let _ = wf.n_samples();
    }
});
