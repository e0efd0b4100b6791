#![no_main]

use framecnl::registry::parse_registry;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = parse_registry(text);
});
