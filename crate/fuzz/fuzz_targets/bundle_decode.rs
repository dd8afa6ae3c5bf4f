#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = cmmd_core::bundle::Bundle::from_bytes(data);
});
