#![no_main]

use framecnl::akr::{parse_log, TemporalStore};
use framecnl::registry::FrameRegistry;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(records) = parse_log(text) {
        let mut store = TemporalStore::new(FrameRegistry::default_registry());
        for (_, r) in records {
            let _ = store.apply(r);
        }
        assert!(store.index() == &store.rebuild_index());
    }
});
