#![no_main]

use libfuzzer_sys::fuzz_target;

use std::sync::OnceLock;

use msrti::geometry::{enumerate_links, LinkMode, LinkTable};

fn links() -> &'static LinkTable {
    static LINKS: OnceLock<LinkTable> = OnceLock::new();
    LINKS.get_or_init(|| {
        let layout = msrti::ingest::parse_layout("1 0 0\n2 4 0\n3 4 4\n4 0 4\n").unwrap();
        enumerate_links(&layout, &LinkMode::AllPairs).unwrap()
    })
}

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = msrti::ingest::parse_fade_table(text, links());
    }
});
