#![no_main]

use libfuzzer_sys::fuzz_target;
use planmcts::llm::parse::parse_operator;
use planmcts::world::AtomicAction;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    if let Ok(d) = parse_operator(&text) {
        let shown = d.action.to_string();
        assert_eq!(shown.parse::<AtomicAction>().ok(), Some(d.action));
    }
});
