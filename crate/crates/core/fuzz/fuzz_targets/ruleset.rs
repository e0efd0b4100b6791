#![no_main]

use framecnl::c60::{parse_ruleset, serialize_ruleset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(rs) = parse_ruleset(text) {
        let again = parse_ruleset(&serialize_ruleset(&rs)).expect("serialized rule sets parse");
        assert_eq!(again, rs);
    }
});
