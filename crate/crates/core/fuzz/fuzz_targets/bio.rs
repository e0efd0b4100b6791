#![no_main]

use framecnl::corpus::{decode_bio, encode_bio};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let tags: Vec<&str> = text.split_whitespace().collect();
    if let Ok(spans) = decode_bio(&tags) {
        let encoded = encode_bio(tags.len(), &spans).expect("decoded spans encode");
        assert_eq!(decode_bio(&encoded).expect("encoded tags decode"), spans);
    }
});
