#![no_main]

use libfuzzer_sys::fuzz_target;

// Sweep requests come straight from a CLI flag. A parse that succeeds must
// also yield a grid without panicking, and the grid size stays capped.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = uavmec::scenario_file::SweepSpec::parse(text) {
            let grid = spec.grid();
            assert!(grid.len() <= 1000);
            assert!(grid.iter().all(|v| v.is_finite()));
        }
    }
});
