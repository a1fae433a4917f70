#![no_main]

use libfuzzer_sys::fuzz_target;
use planmcts::llm::parse::parse_planner;

fuzz_target!(|data: &[u8]| {
    if let Some((&k, rest)) = data.split_first() {
        let text = String::from_utf8_lossy(rest);
        if let Ok(plans) = parse_planner(&text, usize::from(k % 8)) {
            assert!(plans.len() <= usize::from(k % 8));
        }
    }
});
