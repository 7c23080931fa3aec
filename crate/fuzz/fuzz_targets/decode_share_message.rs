#![no_main]

use libfuzzer_sys::fuzz_target;
use selective_mpc::collection::ShareMessage;

fuzz_target!(|data: &[u8]| {
    if let Ok(msg) = ShareMessage::decode(data) {
        assert_eq!(&msg.encode()[..], data);
    }
});
