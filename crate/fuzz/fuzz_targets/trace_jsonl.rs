#![no_main]

use libfuzzer_sys::fuzz_target;
use planmcts::search::EpisodeTrace;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(t) = EpisodeTrace::from_jsonl(s) {
            let _ = planmcts::harness::EpisodeStats::from_trace(&t);
        }
    }
});
