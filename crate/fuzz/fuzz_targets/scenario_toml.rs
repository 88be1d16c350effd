#![no_main]

use libfuzzer_sys::fuzz_target;

// Scenario documents arrive as UTF-8 TOML; parsing must reject garbage with
// an error, never a panic or a runaway allocation.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = uavmec::scenario_file::parse_document(text, "fuzz input");
    }
});
