#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(truth) = msrti::ingest::parse_ground_truth(text) {
            let again = msrti::ingest::parse_ground_truth(&msrti::ingest::format_ground_truth(&truth)).unwrap();
            assert_eq!(again, truth);
        }
    }
});
