#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // no base directory: layout files are never opened
        let _ = msrti::ingest::parse_scenario(text, None);
    }
});
