#![no_main]

use libfuzzer_sys::fuzz_target;
use planmcts::world::AtomicAction;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(a) = s.parse::<AtomicAction>() {
            assert_eq!(a.to_string().parse::<AtomicAction>().ok(), Some(a));
        }
    }
});
