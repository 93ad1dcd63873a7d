#![no_main]

use libfuzzer_sys::fuzz_target;
use ronorm::norm::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        assert!(ckpt.params.all_finite());
        let _ = ckpt.params.parameter_count();
    }
});
