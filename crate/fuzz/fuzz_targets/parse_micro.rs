#![no_main]

use libfuzzer_sys::fuzz_target;
use planmcts::llm::parse::parse_micro;

fuzz_target!(|data: &[u8]| {
    let _ = parse_micro(&String::from_utf8_lossy(data));
});
