#![no_main]

use libfuzzer_sys::fuzz_target;
use planmcts::llm::parse::extract_json;

fuzz_target!(|data: &[u8]| {
    let _ = extract_json(&String::from_utf8_lossy(data));
});
