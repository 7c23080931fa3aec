#![no_main]

use libfuzzer_sys::fuzz_target;
use selective_mpc::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::load(Some(text), &[]) {
            assert!(cfg.params.validate().is_ok());
            let _ = cfg.config_hash(None);
        }
    }
});
