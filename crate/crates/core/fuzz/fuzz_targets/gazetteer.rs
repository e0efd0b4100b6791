#![no_main]

use framecnl::nel::{link_mention, parse_gazetteer, LinkConfig};
use framecnl::registry::{EntityKind, FillerKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|input: (&str, &str)| {
    let (text, mention) = input;
    if let Ok(gaz) = parse_gazetteer(text, LinkConfig::default()) {
        for kind in [FillerKind::Entity(None), FillerKind::Entity(Some(EntityKind::Person)), FillerKind::String] {
            let filler = link_mention(mention, kind, &gaz, &());
            if let Some(id) = filler.entity_id() {
                assert!(gaz.get(id).is_some());
            }
        }
    }
});
