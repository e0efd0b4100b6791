#![no_main]

use framecnl::eval::AnnotationFile;
use framecnl::parser::{parse_records, write_records};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(records) = parse_records(text) {
        assert_eq!(parse_records(&write_records(&records)).expect("written records parse"), records);
    }
    let _ = AnnotationFile::parse(text);
});
