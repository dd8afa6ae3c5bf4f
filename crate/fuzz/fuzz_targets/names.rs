#![no_main]

use cmmd_core::panel::Quarter;
use cmmd_core::textprep::parse_mda_filename;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(q) = s.parse::<Quarter>() {
        // whatever parses must print back to something that parses to the same quarter
        assert_eq!(q.to_string().parse::<Quarter>().ok(), Some(q));
    }
    let _ = parse_mda_filename(s);
});
