#![no_main]

use libfuzzer_sys::fuzz_target;
use ronorm::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        // an accepted config hashes deterministically and revalidates
        let h1 = cfg.hash();
        let h2 = cfg.hash();
        assert_eq!(h1, h2);
        assert!(cfg.validate().is_ok());
    }
});
