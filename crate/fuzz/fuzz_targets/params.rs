#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = msrti::ingest::parse_ellipse_params(text);
        let _ = msrti::ingest::parse_measurement_params(text);
    }
});
