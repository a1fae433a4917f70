#![no_main]

use libfuzzer_sys::fuzz_target;
use planmcts::world::PageGraph;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(g) = PageGraph::from_json(s) {
            let again = PageGraph::from_json(&g.to_json()).expect("serialized graph reloads");
            assert_eq!(again.to_json(), g.to_json());
        }
    }
});
