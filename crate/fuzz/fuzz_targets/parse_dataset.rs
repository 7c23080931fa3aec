#![no_main]

use libfuzzer_sys::fuzz_target;
use selective_mpc::dataset::Dataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ds) = Dataset::parse(text) {
            let again = Dataset::parse(&ds.to_csv()).expect("round trip");
            assert_eq!(ds.pair_count(), again.pair_count());
        }
    }
});
