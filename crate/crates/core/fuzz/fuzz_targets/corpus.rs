#![no_main]

use framecnl::corpus::{parse_corpus, write_corpus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(sentences) = parse_corpus(text) {
        let written = write_corpus(&sentences);
        let again = parse_corpus(&written).expect("written corpora parse");
        assert_eq!(again, sentences);
    }
});
