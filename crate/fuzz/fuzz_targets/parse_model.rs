#![no_main]

use libfuzzer_sys::fuzz_target;
use resilchk::calculus::parse_model;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Accepted models must survive a print and reparse of every system.
    if let Ok(m) = parse_model(text) {
        for p in m.systems.values() {
            let _ = resilchk::calculus::parse_process(&m, &p.to_string());
        }
    }
});
