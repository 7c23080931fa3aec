#![no_main]

use libfuzzer_sys::fuzz_target;
use selective_mpc::{Fe, Fp, Tiny101};

fuzz_target!(|data: &[u8]| {
    if let Ok(x) = Fe::from_le_bytes(data) {
        let mut out = Vec::new();
        x.write_le(&mut out);
        assert_eq!(out, data);
    }
    if let Ok(x) = Fp::<Tiny101>::from_le_bytes(data) {
        let mut out = Vec::new();
        x.write_le(&mut out);
        assert_eq!(out, data);
    }
});
