#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((grid, image)) = msrti::ingest::decode_image_binary(data) {
        assert_eq!(msrti::ingest::encode_image_binary(&grid, &image).unwrap(), data);
    }
});
