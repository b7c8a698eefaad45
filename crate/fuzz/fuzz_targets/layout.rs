#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(layout) = msrti::ingest::parse_layout(text) {
            let again = msrti::ingest::parse_layout(&msrti::ingest::format_layout(&layout)).unwrap();
            assert_eq!(again.nodes(), layout.nodes());
        }
    }
});
